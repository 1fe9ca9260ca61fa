#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hypervox/tensor.hpp"

namespace hypervox {

enum class ScaleMode { Raw, GlobalMax };

ScaleMode parse_scale_mode(const std::string& name);
std::string to_string(ScaleMode mode);

/// Spectral image stored band-sequential: band-major, then row-major.
struct HyperCube {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::vector<float> values;
  ScaleMode scale_mode = ScaleMode::Raw;

  float at(int band, int y, int x) const {
    return values[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  float& at(int band, int y, int x) { return values[(static_cast<std::size_t>(band) * height + y) * width + x]; }
};

/// Per-pixel labels: 0 is unlabelled, 1..nclass are classes.
struct GroundTruth {
  int width = 0;
  int height = 0;
  int nclass = 0;
  std::vector<std::string> class_names;
  std::vector<std::uint16_t> labels;  // row-major

  std::uint16_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::string class_name(int class_id) const;
};

struct Dataset {
  std::string name;
  HyperCube cube;
  GroundTruth gt;
};

/// Throws InputError unless the cube holds width*height*bands values.
void check_cube(const HyperCube& cube);
/// Throws InputError on label ids above nclass or missing class names.
void check_ground_truth(const GroundTruth& gt);
/// Throws InputError("dimension mismatch ...") when the pair disagree.
void check_compatible(const HyperCube& cube, const GroundTruth& gt);

/// ".hsc": one line of JSON
///   {"magic":"HSC1","width":W,"height":H,"bands":B,"dtype":"f32le","layout":"bsq"}
/// then W*H*B little-endian f32 values.
HyperCube read_cube(const std::string& path);
void write_cube(const std::string& path, const HyperCube& cube);

/// ".hsg": one line of JSON
///   {"magic":"HSG1","width":W,"height":H,"dtype":"u16le","layout":"row-major",
///    "nclass":K,"class_names":[...]}
/// then W*H little-endian u16 labels.
GroundTruth read_ground_truth(const std::string& path);
void write_ground_truth(const std::string& path, const GroundTruth& gt);

/// Loads "<prefix>.hsc" and "<prefix>.hsg", checks them, applies scaling.
Dataset load_dataset(const std::string& cube_path, const std::string& gt_path, ScaleMode mode);

/// raw: unchanged; global-max: every value divided by max |v|.
HyperCube scale(HyperCube cube, ScaleMode mode);

/// Maps a possibly out-of-range coordinate back into [0, size) by mirror
/// reflection about the edge pixels (the edge itself is not repeated).
int reflect_index(int i, int size);

/// The n x n neighbourhood around (x, y) across all bands: shape [1, f, n, n].
Tensor extract_voxel(const HyperCube& cube, int x, int y, int n);

struct LabeledPixel {
  int x = 0;
  int y = 0;
  int label = 0;  // 0-based class index (ground-truth id - 1)

  friend bool operator==(const LabeledPixel&, const LabeledPixel&) = default;
  friend auto operator<=>(const LabeledPixel&, const LabeledPixel&) = default;
};

struct SplitConfig {
  enum class Mode { PerClassCount, PerClassFraction };
  Mode mode = Mode::PerClassFraction;
  int count = 200;
  double fraction = 0.05;
  std::uint64_t seed = 1;

  /// "count:200" or "frac:0.05".
  static SplitConfig parse(const std::string& text, std::uint64_t seed);
  std::string to_string() const;
};

struct DatasetSplit {
  std::vector<LabeledPixel> train;
  std::vector<LabeledPixel> test;
};

/// Per-class sampling: exactly `count` pixels, or round(fraction * size)
/// with a minimum of one, go to training; the rest of the class is test.
DatasetSplit stratified_split(const GroundTruth& gt, const SplitConfig& cfg, Prng& rng);

/// Every labelled pixel in raster order.
std::vector<LabeledPixel> labeled_pixels(const GroundTruth& gt);

/// One epoch of index batches over [0, train_size): a fresh permutation cut
/// into chunks of batch_size, the last one possibly shorter.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t train_size, std::size_t batch_size, Prng& rng);

}  // namespace hypervox
