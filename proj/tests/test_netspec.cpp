#include <doctest.h>

#include <algorithm>
#include <string>

#include "hypervox/error.hpp"
#include "hypervox/netspec.hpp"

using namespace hypervox;

namespace {

// Parameter count recomputed from first principles: walk the layers,
// tracking channels and the feature-map extent.
std::size_t count_by_hand(const NetworkSpec& s) {
  std::size_t ch = 1, f = s.f, h = s.n, w = s.n, total = 0;
  bool flat = false;
  std::size_t features = 0;
  for (const auto& l : s.layers) {
    if (l.is_conv()) {
      total += l.filters * ch * l.kernel.spec * l.kernel.h * l.kernel.w + l.filters;
      f = (f + 2 * l.pad.spec - l.kernel.spec) / l.stride.spec + 1;
      h = (h + 2 * l.pad.h - l.kernel.h) / l.stride.h + 1;
      w = (w + 2 * l.pad.w - l.kernel.w) / l.stride.w + 1;
      ch = l.filters;
    } else {
      if (!flat) features = ch * f * h * w;
      flat = true;
      total += features * l.filters + l.filters;
      features = l.filters;
    }
  }
  return total;
}

NetworkSpec custom(std::string_view text, int n, int f, int nclass) { return parse_spec_text(text, n, f, nclass); }

}  // namespace

TEST_CASE("family parsing") {
  CHECK(parse_family("d") == Family::D);
  CHECK(parse_family("a") == Family::A);
  CHECK_THROWS_AS(parse_family("z"), ArchitectureError);
  CHECK_THROWS_AS(registry(Family::Custom, 3, 103, 9), ArchitectureError);
}

TEST_CASE("registry d at 5x5x103 stays under the 7000 budget") {
  const auto spec = registry(Family::D, 5, 103, 9);
  // 560 + 122 + 1925 + 212 + 1925 + 212 + 245 + 424 + 261
  CHECK(param_count(spec) == 5886);
  CHECK(param_count(spec) < 7000);
  CHECK(count_by_hand(spec) == param_count(spec));
}

TEST_CASE("registry b at n=1 is purely spectral") {
  for (int f : {102, 103, 176}) {
    const auto spec = registry(Family::B, 1, f, 9);
    CHECK(count_layers(spec).conv3d == 0);
    for (const auto& l : spec.layers) CHECK_FALSE(l.is_3d());
  }
}

TEST_CASE("registry a has FC widths 50 and nclass") {
  const auto spec = registry(Family::A, 3, 103, 9);
  std::vector<int> fc;
  for (const auto& l : spec.layers)
    if (!l.is_conv()) fc.push_back(l.filters);
  CHECK(fc == std::vector<int>{50, 9});
}

TEST_CASE("registry layer counts") {
  CHECK(count_layers(registry(Family::A, 3, 103, 9)) == LayerCounts{2, 1, 2});
  CHECK(count_layers(registry(Family::B, 3, 103, 9)) == LayerCounts{2, 2, 1});
  CHECK(count_layers(registry(Family::C, 3, 103, 9)) == LayerCounts{2, 4, 1});
  CHECK(count_layers(registry(Family::D, 5, 103, 9)) == LayerCounts{3, 5, 1});
  CHECK(count_layers(registry(Family::E, 5, 103, 9)) == LayerCounts{4, 6, 1});
  CHECK(registry(Family::D, 5, 103, 9).layers.size() == 9);
  CHECK(registry(Family::E, 5, 103, 9).layers.size() == 11);
  for (Family fam : {Family::A, Family::B, Family::C, Family::D, Family::E})
    for (int n : {1, 3, 5, 7}) CHECK(count_layers(registry(fam, n, 103, 9)) == family_counts(fam, n));
}

TEST_CASE("registry families validate across neighbourhoods and band counts") {
  for (Family fam : {Family::A, Family::B, Family::C, Family::D, Family::E})
    for (int n : {1, 3, 5, 7})
      for (int f : {102, 103, 176}) {
        CAPTURE(to_string(fam));
        CAPTURE(n);
        CAPTURE(f);
        const auto spec = registry(fam, n, f, 9);
        const auto trace = shape_trace(spec);
        // the conv stack ends in a 1x1 spatial map
        std::size_t last_conv = 0;
        for (std::size_t i = 0; i < spec.layers.size(); ++i)
          if (spec.layers[i].is_conv()) last_conv = i;
        CHECK(trace.layers[last_conv].output[2] == 1);
        CHECK(trace.layers[last_conv].output[3] == 1);
        CHECK(trace.layers.back().output == Shape{9});
        CHECK(count_by_hand(spec) == param_count(spec));
      }
  CHECK_THROWS_AS(registry(Family::D, 4, 103, 9), ArchitectureError);
  CHECK_THROWS_AS(registry(Family::D, 3, 103, 1), ArchitectureError);
}

TEST_CASE("spectral-only padding with alternating strides halves the bands") {
  const auto spec = custom(R"(
conv 20 3,3,3 1,1,1 1,0,0
convpool 2 3,1,1 2,1,1 1,0,0
conv 35 3,1,1 1,1,1 1,0,0
convpool 2 3,1,1 2,1,1 1,0,0
conv 35 3,1,1 1,1,1 1,0,0
convpool 2 3,1,1 2,1,1 1,0,0
conv 35 3,1,1 1,1,1 1,0,0
convpool 4 3,1,1 2,1,1 1,0,0
fc nclass
)",
                           3, 103, 9);
  const auto trace = shape_trace(spec);
  CHECK(trace.layers[0].output == Shape{20, 103, 1, 1});
  std::vector<std::size_t> spectral;
  for (const auto& l : trace.layers)
    if (l.output.size() == 4) spectral.push_back(l.output[1]);
  CHECK(spectral == std::vector<std::size_t>{103, 52, 52, 26, 26, 13, 13, 7});
  CHECK(trace.flattened == 28);
  CHECK(trace.layers.back().params == 261);
}

TEST_CASE("registry d follows the halving chain") {
  const auto trace = shape_trace(registry(Family::D, 3, 103, 9));
  std::vector<std::size_t> spectral;
  for (const auto& l : trace.layers)
    if (l.output.size() == 4) spectral.push_back(l.output[1]);
  CHECK(spectral == std::vector<std::size_t>{103, 52, 52, 26, 26, 13, 13, 7});
  CHECK(trace.layers[0].output[2] == 3);
  CHECK(trace.flattened == 28);
}

TEST_CASE("identity network traces to the input shape") {
  const auto spec = custom("conv 1 1,1,1 1,1,1 0,0,0\nfc 2\n", 3, 10, 2);
  const auto trace = shape_trace(spec);
  CHECK(trace.layers[0].output == spec.input_shape());
}

TEST_CASE("over-collapse names the offending layer") {
  const auto spec = custom("conv 4 3,3,3 1,1,1 1,0,0\nconv 4 3,3,3 1,1,1 1,0,0\nfc nclass\n", 3, 20, 4);
  try {
    shape_trace(spec);
    FAIL("expected an architecture error");
  } catch (const ArchitectureError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("structural validation") {
  CHECK_THROWS_AS(validate(custom("fc 4\nconv 4 1,1,1 1,1,1 0,0,0\nfc nclass\n", 1, 10, 3)), ArchitectureError);
  CHECK_THROWS_AS(validate(custom("conv 4 1,1,1 1,1,1 0,0,0\nfc 5\n", 1, 10, 3)), ArchitectureError);
  CHECK_THROWS_AS(validate(custom("conv 4 1,1,1 1,1,1 0,0,0\n", 1, 10, 3)), ArchitectureError);
  CHECK_THROWS_AS(validate(custom("convpool 4 3,1,1 1,1,1 1,0,0\nfc nclass\n", 1, 10, 3)), ArchitectureError);
  CHECK_NOTHROW(validate(custom("convpool 4 3,1,1 2,1,1 1,0,0\nfc nclass\n", 1, 10, 3)));
}

TEST_CASE("parameter counts of single layers") {
  const auto fc = custom("fc nclass\n", 1, 28, 9);
  CHECK(param_count(fc) == 261);
  const auto conv = custom("conv 20 3,3,3 1,1,1 1,1,1\nfc nclass\n", 3, 5, 2);
  CHECK(shape_trace(conv).layers[0].params == 560);
}

TEST_CASE("text form round trips") {
  for (Family fam : {Family::A, Family::B, Family::C, Family::D, Family::E}) {
    const auto spec = registry(fam, 5, 103, 9);
    auto back = parse_spec_text(to_text(spec), 5, 103, 9);
    back.family = spec.family;
    CHECK(back == spec);
  }
}

TEST_CASE("spec text errors") {
  CHECK_THROWS_AS(parse_spec_text("conv 4 3,3 1,1,1 0,0,0\n", 1, 10, 3), InputError);
  CHECK_THROWS_AS(parse_spec_text("pool 4\n", 1, 10, 3), InputError);
  CHECK_THROWS_AS(parse_spec_text("# nothing\n", 1, 10, 3), InputError);
  CHECK_THROWS_AS(parse_spec_text("fc 3 dropout=x\n", 1, 10, 3), InputError);
  CHECK_THROWS_AS(load_spec_file("/nonexistent/spec.txt", 1, 10, 3), InputError);
}

TEST_CASE("retarget keeps the conv stack and resizes the head") {
  const auto src = registry(Family::D, 3, 103, 9);
  const auto dst = retarget(src, 102, 7);
  CHECK(dst.f == 102);
  CHECK(dst.nclass == 7);
  CHECK(dst.layers.back().filters == 7);
  for (std::size_t i = 0; i + 1 < src.layers.size(); ++i) CHECK(dst.layers[i] == src.layers[i]);
  CHECK_NOTHROW(validate(dst));
}

TEST_CASE("reference counts are listed for published families") {
  const auto d = reference_counts(Family::D);
  std::vector<std::size_t> published;
  for (const auto& r : d) published.push_back(r.published);
  CHECK(std::find(published.begin(), published.end(), 6862) != published.end());
  CHECK(std::find(published.begin(), published.end(), 3681) != published.end());
  CHECK(std::find(published.begin(), published.end(), 2251) != published.end());
  CHECK(reference_counts(Family::E).empty());
}

TEST_CASE("flooring warnings") {
  const auto trace = shape_trace(registry(Family::D, 5, 103, 9));
  CHECK_FALSE(trace.warnings.empty());
}
