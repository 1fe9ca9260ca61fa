#include "hypervox/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <tuple>
#include <sstream>

#include <json.hpp>

#include "hypervox/error.hpp"

namespace hypervox {

using nlohmann::json;

ScaleMode parse_scale_mode(const std::string& name) {
  if (name == "raw") return ScaleMode::Raw;
  if (name == "global-max") return ScaleMode::GlobalMax;
  throw InputError("unknown scale mode '" + name + "' (expected raw or global-max)");
}

std::string to_string(ScaleMode mode) { return mode == ScaleMode::Raw ? "raw" : "global-max"; }

std::string GroundTruth::class_name(int class_id) const {
  if (class_id >= 1 && static_cast<std::size_t>(class_id) <= class_names.size()) {
    return class_names[static_cast<std::size_t>(class_id) - 1];
  }
  return "class " + std::to_string(class_id);
}

void check_cube(const HyperCube& cube) {
  if (cube.width < 1 || cube.height < 1 || cube.bands < 1) {
    throw InputError("cube dimensions must be positive");
  }
  const auto expected = static_cast<std::size_t>(cube.width) * cube.height * cube.bands;
  if (cube.values.size() != expected) {
    throw InputError("cube holds " + std::to_string(cube.values.size()) + " values, expected " +
                     std::to_string(expected));
  }
}

void check_ground_truth(const GroundTruth& gt) {
  if (gt.width < 1 || gt.height < 1) throw InputError("ground-truth dimensions must be positive");
  if (gt.nclass < 1) throw InputError("ground truth needs nclass >= 1");
  if (gt.labels.size() != static_cast<std::size_t>(gt.width) * gt.height) {
    throw InputError("ground truth holds " + std::to_string(gt.labels.size()) + " labels, expected " +
                     std::to_string(static_cast<std::size_t>(gt.width) * gt.height));
  }
  if (!gt.class_names.empty() && gt.class_names.size() != static_cast<std::size_t>(gt.nclass)) {
    throw InputError("ground truth lists " + std::to_string(gt.class_names.size()) + " class names for " +
                     std::to_string(gt.nclass) + " classes");
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (gt.labels[i] > gt.nclass) {
      throw InputError("label " + std::to_string(gt.labels[i]) + " at pixel " + std::to_string(i) +
                       " exceeds nclass " + std::to_string(gt.nclass));
    }
  }
}

void check_compatible(const HyperCube& cube, const GroundTruth& gt) {
  if (cube.width != gt.width || cube.height != gt.height) {
    throw InputError("dimension mismatch: cube is " + std::to_string(cube.width) + "x" + std::to_string(cube.height) +
                     ", ground truth is " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
  }
}

namespace {

template <typename T>
T byteswap_value(T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

template <typename T>
void read_le(std::istream& in, std::vector<T>& out, std::size_t count, const std::string& path) {
  out.resize(count);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T)) {
    throw InputError("'" + path + "' is truncated: expected " + std::to_string(count * sizeof(T)) +
                     " payload bytes, found " + std::to_string(in.gcount()));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InputError("'" + path + "' has trailing bytes after the payload");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : out) v = byteswap_value(v);
  }
}

template <typename T>
void write_le(std::ostream& out, const std::vector<T>& values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (T v : values) {
      v = byteswap_value(v);
      out.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
  } else {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
  }
}

json read_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path + "' is empty");
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw InputError("'" + path + "' has a malformed header: " + e.what());
  }
}

template <typename T>
T header_field(const json& h, const char* key, const std::string& path) {
  if (!h.contains(key)) throw InputError("'" + path + "' header lacks \"" + key + "\"");
  try {
    return h.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("'" + path + "' header field \"" + key + "\" has the wrong type");
  }
}

void expect_field(const json& h, const char* key, const std::string& value, const std::string& path) {
  const auto got = header_field<std::string>(h, key, path);
  if (got != value) {
    throw InputError("'" + path + "': " + key + " is \"" + got + "\", expected \"" + value + "\"");
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

}  // namespace

HyperCube read_cube(const std::string& path) {
  auto in = open_in(path);
  const json h = read_header(in, path);
  expect_field(h, "magic", "HSC1", path);
  expect_field(h, "dtype", "f32le", path);
  expect_field(h, "layout", "bsq", path);
  HyperCube cube;
  cube.width = header_field<int>(h, "width", path);
  cube.height = header_field<int>(h, "height", path);
  cube.bands = header_field<int>(h, "bands", path);
  if (cube.width < 1 || cube.height < 1 || cube.bands < 1) {
    throw InputError("'" + path + "' declares non-positive dimensions");
  }
  read_le(in, cube.values, static_cast<std::size_t>(cube.width) * cube.height * cube.bands, path);
  return cube;
}

void write_cube(const std::string& path, const HyperCube& cube) {
  check_cube(cube);
  json h = json::object();
  h["magic"] = "HSC1";
  h["width"] = cube.width;
  h["height"] = cube.height;
  h["bands"] = cube.bands;
  h["dtype"] = "f32le";
  h["layout"] = "bsq";
  auto out = open_out(path);
  out << h.dump() << '\n';
  write_le(out, cube.values);
  if (!out) throw InputError("failed writing '" + path + "'");
}

GroundTruth read_ground_truth(const std::string& path) {
  auto in = open_in(path);
  const json h = read_header(in, path);
  expect_field(h, "magic", "HSG1", path);
  expect_field(h, "dtype", "u16le", path);
  expect_field(h, "layout", "row-major", path);
  GroundTruth gt;
  gt.width = header_field<int>(h, "width", path);
  gt.height = header_field<int>(h, "height", path);
  gt.nclass = header_field<int>(h, "nclass", path);
  if (h.contains("class_names")) gt.class_names = header_field<std::vector<std::string>>(h, "class_names", path);
  if (gt.width < 1 || gt.height < 1) throw InputError("'" + path + "' declares non-positive dimensions");
  read_le(in, gt.labels, static_cast<std::size_t>(gt.width) * gt.height, path);
  check_ground_truth(gt);
  return gt;
}

void write_ground_truth(const std::string& path, const GroundTruth& gt) {
  check_ground_truth(gt);
  json h = json::object();
  h["magic"] = "HSG1";
  h["width"] = gt.width;
  h["height"] = gt.height;
  h["dtype"] = "u16le";
  h["layout"] = "row-major";
  h["nclass"] = gt.nclass;
  h["class_names"] = gt.class_names;
  auto out = open_out(path);
  out << h.dump() << '\n';
  write_le(out, gt.labels);
  if (!out) throw InputError("failed writing '" + path + "'");
}

Dataset load_dataset(const std::string& cube_path, const std::string& gt_path, ScaleMode mode) {
  Dataset ds;
  ds.name = cube_path;
  ds.cube = read_cube(cube_path);
  ds.gt = read_ground_truth(gt_path);
  check_compatible(ds.cube, ds.gt);
  ds.cube = scale(std::move(ds.cube), mode);
  return ds;
}

HyperCube scale(HyperCube cube, ScaleMode mode) {
  check_cube(cube);
  if (mode == ScaleMode::Raw) {
    cube.scale_mode = ScaleMode::Raw;
    return cube;
  }
  float max_abs = 0.0f;
  for (float v : cube.values) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs == 0.0f) throw InputError("cannot apply global-max scaling to an all-zero cube");
  for (float& v : cube.values) v /= max_abs;
  cube.scale_mode = ScaleMode::GlobalMax;
  return cube;
}

int reflect_index(int i, int size) {
  if (size == 1) return 0;
  const int period = 2 * (size - 1);
  int r = i % period;
  if (r < 0) r += period;
  return r < size ? r : period - r;
}

Tensor extract_voxel(const HyperCube& cube, int x, int y, int n) {
  if (n < 1 || n % 2 == 0) throw InputError("voxel size n must be odd, got " + std::to_string(n));
  if (x < 0 || y < 0 || x >= cube.width || y >= cube.height) {
    throw InputError("pixel (" + std::to_string(x) + "," + std::to_string(y) + ") lies outside the image");
  }
  const int r = n / 2;
  const auto un = static_cast<std::size_t>(n);
  Tensor voxel({1, static_cast<std::size_t>(cube.bands), un, un});
  float* dst = voxel.raw();
  int xs[64];
  std::vector<int> xs_heap;
  int* xi = xs;
  if (n > 64) {
    xs_heap.resize(un);
    xi = xs_heap.data();
  }
  for (int j = 0; j < n; ++j) xi[j] = reflect_index(x - r + j, cube.width);
  const std::size_t plane = static_cast<std::size_t>(cube.width) * cube.height;
  for (int b = 0; b < cube.bands; ++b) {
    const float* band = cube.values.data() + b * plane;
    for (int i = 0; i < n; ++i) {
      const float* row = band + static_cast<std::size_t>(reflect_index(y - r + i, cube.height)) * cube.width;
      for (int j = 0; j < n; ++j) *dst++ = row[xi[j]];
    }
  }
  return voxel;
}

SplitConfig SplitConfig::parse(const std::string& text, std::uint64_t seed) {
  SplitConfig cfg;
  cfg.seed = seed;
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw InputError("split must look like count:200 or frac:0.05, got '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string value = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    if (kind == "count") {
      cfg.mode = Mode::PerClassCount;
      cfg.count = std::stoi(value, &used);
      if (used != value.size() || cfg.count < 1) throw InputError("");
    } else if (kind == "frac") {
      cfg.mode = Mode::PerClassFraction;
      cfg.fraction = std::stod(value, &used);
      if (used != value.size() || !(cfg.fraction > 0.0 && cfg.fraction < 1.0)) throw InputError("");
    } else {
      throw InputError("");
    }
  } catch (const std::exception&) {
    throw InputError("invalid split '" + text + "' (count:K with K >= 1, or frac:P with 0 < P < 1)");
  }
  return cfg;
}

std::string SplitConfig::to_string() const {
  if (mode == Mode::PerClassCount) return "count:" + std::to_string(count);
  std::ostringstream out;
  out << "frac:" << fraction;
  return out.str();
}

std::vector<LabeledPixel> labeled_pixels(const GroundTruth& gt) {
  std::vector<LabeledPixel> out;
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      const int id = gt.at(x, y);
      if (id != 0) out.push_back({x, y, id - 1});
    }
  }
  return out;
}

DatasetSplit stratified_split(const GroundTruth& gt, const SplitConfig& cfg, Prng& rng) {
  if (cfg.mode == SplitConfig::Mode::PerClassCount && cfg.count < 1) {
    throw InputError("per-class count must be >= 1");
  }
  if (cfg.mode == SplitConfig::Mode::PerClassFraction && !(cfg.fraction > 0.0 && cfg.fraction < 1.0)) {
    throw InputError("per-class fraction must lie in (0, 1)");
  }
  std::vector<std::vector<LabeledPixel>> by_class(static_cast<std::size_t>(gt.nclass));
  for (const auto& p : labeled_pixels(gt)) by_class[static_cast<std::size_t>(p.label)].push_back(p);

  DatasetSplit split;
  for (int c = 0; c < gt.nclass; ++c) {
    auto& pixels = by_class[static_cast<std::size_t>(c)];
    const std::size_t size = pixels.size();
    std::size_t take = 0;
    if (cfg.mode == SplitConfig::Mode::PerClassCount) {
      if (size < static_cast<std::size_t>(cfg.count)) {
        throw InputError("class " + std::to_string(c + 1) + " '" + gt.class_name(c + 1) + "' has only " +
                         std::to_string(size) + " labeled pixels, " + std::to_string(cfg.count) +
                         " needed for training");
      }
      take = static_cast<std::size_t>(cfg.count);
    } else {
      if (size < 2) {
        throw InputError("class " + std::to_string(c + 1) + " '" + gt.class_name(c + 1) + "' has only " +
                         std::to_string(size) + " labeled pixels, at least 2 needed for a fractional split");
      }
      take = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.fraction * static_cast<double>(size))));
      take = std::min(take, size);
    }
    shuffle(std::span<LabeledPixel>(pixels), rng);
    split.train.insert(split.train.end(), pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(take));
    split.test.insert(split.test.end(), pixels.begin() + static_cast<std::ptrdiff_t>(take), pixels.end());
  }
  // Test order is canonical so evaluation never depends on the shuffle.
  std::sort(split.test.begin(), split.test.end(),
            [](const LabeledPixel& a, const LabeledPixel& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
  return split;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t train_size, std::size_t batch_size, Prng& rng) {
  if (batch_size < 1) throw InputError("batch size must be >= 1");
  const auto order = sample_indices_without_replacement(rng, train_size, train_size);
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve((train_size + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < train_size; start += batch_size) {
    const std::size_t end = std::min(train_size, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace hypervox
