#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypervox/data.hpp"
#include "hypervox/network.hpp"
#include "hypervox/train.hpp"

namespace hypervox {

inline constexpr int kCheckpointVersion = 1;

/// A manifest describing the network and every tensor, plus the tensors
/// themselves as little-endian f32 in manifest order.
///
/// Manifest keys: format ("hypervox-checkpoint"), version, family, n, f,
/// nclass, spec (text form), tensors [{name, shape, offset}] with offsets in
/// elements, blob_elements, metadata (free-form).
struct Checkpoint {
  nlohmann::ordered_json manifest;
  std::vector<float> blob;
};

Checkpoint save(const Network& net, const nlohmann::ordered_json& metadata = nlohmann::ordered_json::object());

/// Rebuilds the network. Throws CheckpointVersionError, CheckpointShapeError
/// or TruncatedBlobError.
Network load(const Checkpoint& ckpt);

/// File form: the manifest as one JSON line, then the blob bytes.
std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Conv layers of `source` on a new band count / class count, with every FC
/// layer replaced by a freshly initialised one. Conv weights are copied and,
/// if `freeze_features`, frozen.
Network transplant_features(const Network& source, int f, int nclass, Prng& rng, bool freeze_features = true);

struct FineTuneResult {
  Network net;
  RunReport report;
  DatasetSplit split;
};

/// Loads the checkpoint, swaps the classifier head for the new dataset and
/// trains only what is not frozen. Split and seeds follow averaged_runs:
/// derived from cfg.seed.
FineTuneResult fine_tune(const Checkpoint& ckpt, const Dataset& dataset, const SplitConfig& split,
                         const TrainConfig& cfg, bool freeze_features = true);

}  // namespace hypervox
