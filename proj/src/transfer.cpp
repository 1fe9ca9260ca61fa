#include "hypervox/transfer.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hypervox/error.hpp"

namespace hypervox {

using nlohmann::ordered_json;

Checkpoint save(const Network& net, const ordered_json& metadata) {
  Checkpoint ck;
  const NetworkSpec& spec = net.spec();
  auto& m = ck.manifest;
  m["format"] = "hypervox-checkpoint";
  m["version"] = kCheckpointVersion;
  m["family"] = std::string(to_string(spec.family));
  m["n"] = spec.n;
  m["f"] = spec.f;
  m["nclass"] = spec.nclass;
  m["spec"] = to_text(spec);
  ordered_json tensors = ordered_json::array();
  for (const auto& nt : net.named_tensors()) {
    ordered_json t;
    t["name"] = nt.name;
    t["shape"] = nt.tensor->shape();
    t["offset"] = ck.blob.size();
    tensors.push_back(std::move(t));
    ck.blob.insert(ck.blob.end(), nt.tensor->data().begin(), nt.tensor->data().end());
  }
  m["tensors"] = std::move(tensors);
  m["blob_elements"] = ck.blob.size();
  m["metadata"] = metadata;
  return ck;
}

namespace {

template <typename T>
T field(const ordered_json& m, const char* key) {
  if (!m.contains(key)) throw CheckpointError(std::string("checkpoint manifest lacks \"") + key + "\"");
  try {
    return m.at(key).get<T>();
  } catch (const ordered_json::exception&) {
    throw CheckpointError(std::string("checkpoint manifest field \"") + key + "\" has the wrong type");
  }
}

NetworkSpec spec_from_manifest(const ordered_json& m) {
  const int n = field<int>(m, "n");
  const int f = field<int>(m, "f");
  const int nclass = field<int>(m, "nclass");
  NetworkSpec spec = parse_spec_text(field<std::string>(m, "spec"), n, f, nclass);
  spec.family = parse_family(field<std::string>(m, "family"));
  return spec;
}

}  // namespace

Network load(const Checkpoint& ck) {
  const auto& m = ck.manifest;
  if (field<std::string>(m, "format") != "hypervox-checkpoint") throw CheckpointError("not a hypervox checkpoint");
  const int version = field<int>(m, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const auto declared = field<std::size_t>(m, "blob_elements");
  if (ck.blob.size() < declared) {
    throw TruncatedBlobError("checkpoint blob holds " + std::to_string(ck.blob.size()) + " values, manifest declares " +
                             std::to_string(declared));
  }
  if (ck.blob.size() > declared) {
    throw CheckpointShapeError("checkpoint blob holds " + std::to_string(ck.blob.size() - declared) +
                               " values beyond the manifest");
  }

  const NetworkSpec spec = spec_from_manifest(m);
  Prng unused(0);
  Network net = Network::build(spec, unused);
  const auto& entries = m.at("tensors");
  std::size_t i = 0;
  for (auto& stage : net.stages()) {
    for (Tensor* t : {&stage.weights(), &stage.bias()}) {
      if (i >= entries.size()) throw CheckpointShapeError("checkpoint lists fewer tensors than the network has");
      const auto& e = entries[i++];
      const auto shape = field<Shape>(e, "shape");
      const auto offset = field<std::size_t>(e, "offset");
      if (shape != t->shape()) {
        throw CheckpointShapeError("tensor '" + field<std::string>(e, "name") + "' has shape " +
                                   shape_to_string(shape) + ", network expects " + shape_to_string(t->shape()));
      }
      if (offset + t->size() > ck.blob.size()) {
        throw TruncatedBlobError("tensor '" + field<std::string>(e, "name") + "' runs past the end of the blob");
      }
      std::copy_n(ck.blob.begin() + static_cast<std::ptrdiff_t>(offset), t->size(), t->data().begin());
    }
  }
  if (i != entries.size()) throw CheckpointShapeError("checkpoint lists more tensors than the network has");
  net.set_mode(Mode::Infer);
  return net;
}

std::string serialize(const Checkpoint& ck) {
  std::string out = ck.manifest.dump();
  out += '\n';
  const std::size_t header = out.size();
  out.resize(header + ck.blob.size() * sizeof(float));
  char* dst = out.data() + header;
  for (float v : ck.blob) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  return out;
}

Checkpoint deserialize(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw CheckpointError("checkpoint has no manifest line");
  Checkpoint ck;
  try {
    ck.manifest = ordered_json::parse(bytes.substr(0, newline));
  } catch (const ordered_json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  const std::size_t payload = bytes.size() - newline - 1;
  if (payload % sizeof(float) != 0) {
    throw TruncatedBlobError("checkpoint blob length " + std::to_string(payload) + " is not a multiple of 4 bytes");
  }
  ck.blob.resize(payload / sizeof(float));
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + newline + 1);
  for (auto& v : ck.blob) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(*src++) << (8 * b);
    v = std::bit_cast<float>(bits);
  }
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

Network transplant_features(const Network& source, int f, int nclass, Prng& rng, bool freeze_features) {
  const NetworkSpec spec = retarget(source.spec(), f, nclass);
  // Validation reruns the shape trace on the new band count.
  Network net = Network::build(spec, rng);
  for (std::size_t i = 0; i < net.stages().size(); ++i) {
    Stage& dst = net.stages()[i];
    if (!dst.spec.is_conv()) continue;
    const Stage& src = source.stages()[i];
    dst.conv.weights = src.conv.weights;
    dst.conv.bias = src.conv.bias;
    dst.frozen = freeze_features;
  }
  return net;
}

FineTuneResult fine_tune(const Checkpoint& ckpt, const Dataset& dataset, const SplitConfig& split,
                         const TrainConfig& cfg, bool freeze_features) {
  const Network source = load(ckpt);
  check_compatible(dataset.cube, dataset.gt);
  const RunSeeds rs = derive_run_seeds(cfg.seed);
  Prng init_rng(rs.init);
  Network net = transplant_features(source, dataset.cube.bands, dataset.gt.nclass, init_rng, freeze_features);
  Prng split_rng(rs.split);
  DatasetSplit ds = stratified_split(dataset.gt, split, split_rng);
  TrainConfig run_cfg = cfg;
  run_cfg.seed = rs.train;
  RunReport report = run(net, dataset.cube, ds, run_cfg);
  return {std::move(net), std::move(report), std::move(ds)};
}

}  // namespace hypervox
