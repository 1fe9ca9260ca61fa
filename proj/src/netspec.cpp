#include "hypervox/netspec.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hypervox/error.hpp"

namespace hypervox {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ConvPool: return "convpool";
    case LayerKind::FC: return "fc";
  }
  return "?";
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::A: return "a";
    case Family::B: return "b";
    case Family::C: return "c";
    case Family::D: return "d";
    case Family::E: return "e";
    case Family::Custom: return "custom";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "a") return Family::A;
  if (name == "b") return Family::B;
  if (name == "c") return Family::C;
  if (name == "d") return Family::D;
  if (name == "e") return Family::E;
  if (name == "custom") return Family::Custom;
  throw ArchitectureError("unknown network family '" + std::string(name) + "' (expected a, b, c, d or e)");
}

namespace {

struct ConvSlot {
  int filters;
  bool spatial;  // 3D kernel when n > 1
  int spectral_stride;
};

struct FamilyLayout {
  std::vector<ConvSlot> convs;
  std::vector<int> pools;  // pools[i] follows convs[i]
  std::vector<int> hidden_fc;
};

FamilyLayout layout_of(Family family) {
  switch (family) {
    case Family::A: return {{{20, true, 1}, {35, true, 2}}, {35}, {50}};
    case Family::B: return {{{20, true, 1}, {35, true, 1}}, {35, 35}, {}};
    case Family::C: return {{{20, true, 1}, {35, true, 1}, {35, false, 1}}, {35, 35, 35}, {}};
    case Family::D: return {{{20, true, 1}, {35, true, 1}, {35, true, 1}, {35, false, 1}}, {2, 2, 2, 4}, {}};
    case Family::E:
      return {{{20, true, 1}, {35, true, 1}, {35, true, 1}, {35, true, 1}, {35, false, 1}}, {2, 2, 2, 2, 4}, {}};
    case Family::Custom: break;
  }
  throw ArchitectureError("family 'custom' has no registry layout");
}

constexpr float kFcDropout = 0.5f;

void check_neighbourhood(int n) {
  if (n < 1 || n % 2 == 0) {
    throw ArchitectureError("spatial neighbourhood must be odd and >= 1, got " + std::to_string(n));
  }
}

// Spatial (kernel, pad) of each 3D conv so that an n x n neighbourhood ends
// at 1 x 1 after the last of them.
std::vector<std::pair<int, int>> spatial_schedule(int n, int m) {
  std::vector<std::pair<int, int>> out(static_cast<std::size_t>(m), {1, 0});
  if (n == 1 || m == 0) return out;
  const int chunks = (n - 1) / 2;  // each no-pad 3x3 conv removes 2 pixels
  if (chunks <= m) {
    for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = i >= m - chunks ? std::pair{3, 0} : std::pair{3, 1};
    return out;
  }
  // Fewer 3D convs than collapse steps: widen the leading kernels.
  for (int i = 0; i < m; ++i) {
    const int mine = chunks / m + (i < chunks % m ? 1 : 0);
    out[static_cast<std::size_t>(i)] = {2 * mine + 1, 0};
  }
  return out;
}

LayerSpec conv_layer(int filters, int spatial_kernel, int spatial_pad, int spectral_stride) {
  LayerSpec l;
  l.kind = spectral_stride > 1 ? LayerKind::ConvPool : LayerKind::Conv;
  l.filters = filters;
  l.kernel = {3, spatial_kernel, spatial_kernel};
  l.stride = {spectral_stride, 1, 1};
  l.pad = {1, spatial_pad, spatial_pad};
  return l;
}

LayerSpec fc_layer(int units, bool relu) {
  LayerSpec l;
  l.kind = LayerKind::FC;
  l.filters = units;
  l.relu = relu;
  l.dropout = kFcDropout;
  return l;
}

std::string layer_name(std::size_t index, const LayerSpec& l) {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(l.kind)) + "[" +
         std::to_string(l.filters) + "])";
}

}  // namespace

NetworkSpec registry(Family family, int n, int f, int nclass) {
  check_neighbourhood(n);
  if (f < 1) throw ArchitectureError("band count must be >= 1");
  if (nclass < 2) throw ArchitectureError("need at least two classes");
  const FamilyLayout layout = layout_of(family);

  int spatial_convs = 0;
  for (const auto& c : layout.convs) spatial_convs += c.spatial ? 1 : 0;
  const auto schedule = spatial_schedule(n, spatial_convs);

  NetworkSpec spec;
  spec.family = family;
  spec.n = n;
  spec.f = f;
  spec.nclass = nclass;
  std::size_t next_3d = 0;
  for (std::size_t i = 0; i < layout.convs.size(); ++i) {
    const auto& slot = layout.convs[i];
    auto [k, p] = slot.spatial ? schedule[next_3d++] : std::pair{1, 0};
    spec.layers.push_back(conv_layer(slot.filters, k, p, slot.spectral_stride));
    if (i < layout.pools.size()) spec.layers.push_back(conv_layer(layout.pools[i], 1, 0, 2));
  }
  for (int units : layout.hidden_fc) spec.layers.push_back(fc_layer(units, true));
  spec.layers.push_back(fc_layer(nclass, false));

  validate(spec);
  if (family == Family::D && n == 5 && f == 103 && nclass == 9) {
    const auto count = param_count(spec);
    if (count >= 7000) {
      throw ArchitectureError("family d self-check failed: " + std::to_string(count) +
                              " parameters at 5x5x103/9 (budget < 7000)");
    }
  }
  return spec;
}

LayerCounts family_counts(Family family, int n) {
  check_neighbourhood(n);
  const FamilyLayout layout = layout_of(family);
  LayerCounts counts;
  for (const auto& c : layout.convs) {
    if (c.spatial && n > 1) {
      ++counts.conv3d;
    } else {
      ++counts.conv1d;
    }
  }
  counts.conv1d += static_cast<int>(layout.pools.size());
  counts.fc = static_cast<int>(layout.hidden_fc.size()) + 1;
  return counts;
}

LayerCounts count_layers(const NetworkSpec& spec) {
  LayerCounts counts;
  for (const auto& l : spec.layers) {
    if (!l.is_conv()) {
      ++counts.fc;
    } else if (l.is_3d()) {
      ++counts.conv3d;
    } else {
      ++counts.conv1d;
    }
  }
  return counts;
}

ShapeTrace shape_trace(const NetworkSpec& spec) {
  if (spec.n < 1 || spec.f < 1) throw ArchitectureError("input geometry must be positive");
  ShapeTrace trace;
  Shape current = spec.input_shape();
  bool seen_fc = false;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.filters < 1) throw ArchitectureError(layer_name(i, l) + ": filter count must be >= 1");
    LayerTrace lt;
    lt.index = i;
    lt.input = current;
    if (l.is_conv()) {
      if (seen_fc) throw ArchitectureError(layer_name(i, l) + ": convolution after a fully connected layer");
      const int in[3] = {static_cast<int>(current[1]), static_cast<int>(current[2]), static_cast<int>(current[3])};
      const int k[3] = {l.kernel.spec, l.kernel.h, l.kernel.w};
      const int s[3] = {l.stride.spec, l.stride.h, l.stride.w};
      const int p[3] = {l.pad.spec, l.pad.h, l.pad.w};
      static constexpr const char* kAxis[3] = {"spectral", "height", "width"};
      Shape out{static_cast<std::size_t>(l.filters), 0, 0, 0};
      for (int a = 0; a < 3; ++a) {
        if (k[a] < 1 || s[a] < 1 || p[a] < 0) {
          throw ArchitectureError(layer_name(i, l) + ": invalid " + kAxis[a] + " kernel/stride/pad");
        }
        if (k[a] > in[a] + 2 * p[a]) {
          throw ArchitectureError(layer_name(i, l) + ": " + kAxis[a] + " kernel " + std::to_string(k[a]) +
                                  " on input of size " + std::to_string(in[a]) + " with pad " +
                                  std::to_string(p[a]) + " gives an output size < 1");
        }
        if (k[a] > in[a]) {
          throw ArchitectureError(layer_name(i, l) + ": " + kAxis[a] + " kernel " + std::to_string(k[a]) +
                                  " is wider than its input of size " + std::to_string(in[a]));
        }
        out[static_cast<std::size_t>(a) + 1] = static_cast<std::size_t>(size_out(in[a], k[a], p[a], s[a]));
        if (size_out_discards(in[a], k[a], p[a], s[a])) {
          trace.warnings.push_back(layer_name(i, l) + ": " + kAxis[a] + " stride " + std::to_string(s[a]) +
                                   " leaves trailing input positions unused (" + std::to_string(in[a]) + " -> " +
                                   std::to_string(out[static_cast<std::size_t>(a) + 1]) + ")");
        }
      }
      if (l.kind == LayerKind::ConvPool && l.stride.spec < 2 && l.stride.h < 2 && l.stride.w < 2) {
        throw ArchitectureError(layer_name(i, l) + ": convpool needs a stride >= 2 on some axis");
      }
      lt.params = static_cast<std::size_t>(l.filters) * current[0] * k[0] * k[1] * k[2] + l.filters;
      current = out;
    } else {
      const std::size_t in_dim = shape_product(current);
      if (!seen_fc) trace.flattened = in_dim;
      seen_fc = true;
      if (l.dropout && !(*l.dropout >= 0.0f && *l.dropout < 1.0f)) {
        throw ArchitectureError(layer_name(i, l) + ": dropout rate must lie in [0, 1)");
      }
      lt.params = in_dim * static_cast<std::size_t>(l.filters) + l.filters;
      current = {static_cast<std::size_t>(l.filters)};
    }
    lt.output = current;
    trace.layers.push_back(lt);
  }
  return trace;
}

std::size_t param_count(const NetworkSpec& spec) {
  std::size_t total = 0;
  for (const auto& lt : shape_trace(spec).layers) total += lt.params;
  return total;
}

void validate(const NetworkSpec& spec) {
  if (spec.layers.empty()) throw ArchitectureError("network has no layers");
  if (spec.nclass < 2) throw ArchitectureError("need at least two classes");
  shape_trace(spec);
  const LayerSpec& last = spec.layers.back();
  if (last.kind != LayerKind::FC) {
    throw ArchitectureError("the last layer must be fully connected, got " + layer_name(spec.layers.size() - 1, last));
  }
  if (last.filters != spec.nclass) {
    throw ArchitectureError("final FC has " + std::to_string(last.filters) + " outputs but the dataset has " +
                            std::to_string(spec.nclass) + " classes");
  }
  if (spec.family != Family::Custom) {
    const LayerCounts expected = family_counts(spec.family, spec.n);
    const LayerCounts actual = count_layers(spec);
    if (!(expected == actual)) {
      throw ArchitectureError("family " + std::string(to_string(spec.family)) + " expects N3D=" +
                              std::to_string(expected.conv3d) + " N1D=" + std::to_string(expected.conv1d) +
                              " NFC=" + std::to_string(expected.fc) + ", spec has N3D=" +
                              std::to_string(actual.conv3d) + " N1D=" + std::to_string(actual.conv1d) +
                              " NFC=" + std::to_string(actual.fc));
    }
  }
}

std::vector<ReferenceCount> reference_counts(Family family) {
  switch (family) {
    case Family::A:
      return {{"Pavia U 1x1", 1, 103, 9, 51669},
              {"Pavia U 3x3", 3, 103, 9, 53189},
              {"Pavia U 5x5", 5, 103, 9, 56669},
              {"Pavia U 7x7", 7, 103, 9, 61949}};
    case Family::B:
      return {{"Pavia U 1x1", 1, 103, 9, 17759},
              {"Pavia U 3x3", 3, 103, 9, 27524},
              {"Pavia U 5x5", 5, 103, 9, 28749},
              {"KSC 3x3", 3, 176, 13, 18698}};
    case Family::C:
      return {{"Pavia U 1x1", 1, 103, 9, 4754},
              {"Pavia U 3x3", 3, 103, 9, 6074},
              {"Pavia U 5x5", 5, 103, 9, 6074},
              {"KSC 3x3", 3, 176, 13, 1175}};
    case Family::D:
      return {{"Pavia U 1x1", 1, 103, 9, 2161},
              {"Pavia U 3x3", 3, 103, 9, 3681},
              {"Pavia U 5x5", 5, 103, 9, 6862},
              {"KSC 5x5", 5, 176, 13, 2251}};
    case Family::E:
    case Family::Custom:
      break;
  }
  return {};
}

namespace {

std::string triple_text(const Triple& t) {
  return std::to_string(t.spec) + "," + std::to_string(t.h) + "," + std::to_string(t.w);
}

Triple parse_triple(const std::string& token, std::size_t line_no) {
  Triple t;
  char c1 = 0, c2 = 0;
  std::istringstream in(token);
  if (!(in >> t.spec >> c1 >> t.h >> c2 >> t.w) || c1 != ',' || c2 != ',' || !in.eof()) {
    throw InputError("spec line " + std::to_string(line_no) + ": expected a triple like 3,1,1, got '" + token + "'");
  }
  return t;
}

std::string format_rate(float rate) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), rate);
  return std::string(buf, end);
}

}  // namespace

std::string to_text(const NetworkSpec& spec) {
  std::ostringstream out;
  out << "# kind filters kernel(spec,h,w) stride(spec,h,w) pad(spec,h,w)\n";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const bool last = i + 1 == spec.layers.size();
    out << to_string(l.kind) << ' ';
    if (l.is_conv()) {
      out << l.filters << ' ' << triple_text(l.kernel) << ' ' << triple_text(l.stride) << ' ' << triple_text(l.pad);
      if (!l.relu) out << " norelu";
    } else {
      if (last && l.filters == spec.nclass) {
        out << "nclass";
      } else {
        out << l.filters;
      }
      if (l.dropout) out << " dropout=" << format_rate(*l.dropout);
      if (last ? l.relu : !l.relu) out << (l.relu ? " relu" : " norelu");
    }
    out << '\n';
  }
  return out.str();
}

NetworkSpec parse_spec_text(std::string_view text, int n, int f, int nclass) {
  NetworkSpec spec;
  spec.family = Family::Custom;
  spec.n = n;
  spec.f = f;
  spec.nclass = nclass;

  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::optional<bool> last_fc_relu_flag;
  while (std::getline(lines, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::vector<std::string> words;
    for (std::string w; tokens >> w;) words.push_back(w);
    if (words.empty()) continue;

    LayerSpec l;
    const std::string& kind = words[0];
    std::size_t next = 0;
    if (kind == "conv" || kind == "convpool") {
      l.kind = kind == "conv" ? LayerKind::Conv : LayerKind::ConvPool;
      if (words.size() < 5) {
        throw InputError("spec line " + std::to_string(line_no) + ": conv layers need filters, kernel, stride, pad");
      }
      try {
        l.filters = std::stoi(words[1]);
      } catch (const std::exception&) {
        throw InputError("spec line " + std::to_string(line_no) + ": bad filter count '" + words[1] + "'");
      }
      l.kernel = parse_triple(words[2], line_no);
      l.stride = parse_triple(words[3], line_no);
      l.pad = parse_triple(words[4], line_no);
      next = 5;
    } else if (kind == "fc") {
      l.kind = LayerKind::FC;
      if (words.size() < 2) throw InputError("spec line " + std::to_string(line_no) + ": fc needs a width");
      if (words[1] == "nclass") {
        l.filters = nclass;
      } else {
        try {
          l.filters = std::stoi(words[1]);
        } catch (const std::exception&) {
          throw InputError("spec line " + std::to_string(line_no) + ": bad fc width '" + words[1] + "'");
        }
      }
      next = 2;
    } else {
      throw InputError("spec line " + std::to_string(line_no) + ": unknown layer kind '" + kind + "'");
    }
    std::optional<bool> relu_flag;
    for (; next < words.size(); ++next) {
      const std::string& w = words[next];
      if (w == "norelu") {
        relu_flag = false;
      } else if (w == "relu") {
        relu_flag = true;
      } else if (w.rfind("dropout=", 0) == 0 && l.kind == LayerKind::FC) {
        try {
          l.dropout = std::stof(w.substr(8));
        } catch (const std::exception&) {
          throw InputError("spec line " + std::to_string(line_no) + ": bad dropout '" + w + "'");
        }
      } else {
        throw InputError("spec line " + std::to_string(line_no) + ": unknown option '" + w + "'");
      }
    }
    l.relu = relu_flag.value_or(true);
    last_fc_relu_flag = relu_flag;
    spec.layers.push_back(l);
  }
  if (spec.layers.empty()) throw InputError("spec text contains no layers");
  // The output layer feeds the softmax; it is linear unless asked otherwise.
  if (spec.layers.back().kind == LayerKind::FC && !last_fc_relu_flag) spec.layers.back().relu = false;
  return spec;
}

NetworkSpec load_spec_file(const std::string& path, int n, int f, int nclass) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open spec file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec_text(buf.str(), n, f, nclass);
}

NetworkSpec retarget(const NetworkSpec& spec, int f, int nclass) {
  NetworkSpec out = spec;
  out.f = f;
  out.nclass = nclass;
  if (!out.layers.empty() && out.layers.back().kind == LayerKind::FC) out.layers.back().filters = nclass;
  return out;
}

}  // namespace hypervox
