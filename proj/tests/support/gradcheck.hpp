#pragma once

// Randomised gradient checks shared by the unit tests and the acceptance
// runner. Each case returns the worst relative error over the gradients it
// compares.

#include <cstdint>
#include <vector>

#include "hypervox/layers.hpp"
#include "hypervox/optim.hpp"
#include "oracle.hpp"

namespace hvtest {

using hypervox::Prng;
using hypervox::Triple;

inline int pick(Prng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(hi - lo + 1)); }

inline void fill_uniform(Tensor& t, Prng& rng, double lo = -1.0, double hi = 1.0) {
  for (float& v : t.data()) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
}

/// A small random convolution problem with mixed kernels, strides and pads.
struct ConvCase {
  Conv3dGeometry geom;
  Shape input_shape;
};

inline ConvCase random_conv_case(Prng& rng, int max_size = 7) {
  ConvCase c;
  c.geom.in_channels = pick(rng, 1, 3);
  c.geom.filters = pick(rng, 1, 3);
  c.input_shape = {static_cast<std::size_t>(c.geom.in_channels)};
  int* k[3] = {&c.geom.kernel.spec, &c.geom.kernel.h, &c.geom.kernel.w};
  int* s[3] = {&c.geom.stride.spec, &c.geom.stride.h, &c.geom.stride.w};
  int* p[3] = {&c.geom.pad.spec, &c.geom.pad.h, &c.geom.pad.w};
  for (int a = 0; a < 3; ++a) {
    const int size = pick(rng, 1, max_size);
    *p[a] = pick(rng, 0, 2);
    *k[a] = pick(rng, 1, std::min(4, size + 2 * *p[a]));
    if (*p[a] >= *k[a]) *p[a] = *k[a] - 1;
    if (*k[a] > size + 2 * *p[a]) *k[a] = size + 2 * *p[a];
    *s[a] = pick(rng, 1, 3);
    c.input_shape.push_back(static_cast<std::size_t>(size));
  }
  return c;
}

inline hypervox::Conv3dLayer random_conv_layer(const Conv3dGeometry& g, Prng& rng) {
  auto layer = hypervox::Conv3dLayer::zeros(g);
  fill_uniform(layer.weights, rng);
  fill_uniform(layer.bias, rng);
  return layer;
}

/// L = sum(r * conv(x)); checks d/dx, d/dW and d/db.
inline double conv_gradient_case(Prng& rng) {
  const ConvCase c = random_conv_case(rng);
  auto layer = random_conv_layer(c.geom, rng);
  Tensor x(c.input_shape);
  fill_uniform(x, rng);
  hypervox::Conv3dCache cache;
  const Tensor y = hypervox::conv3d_forward(x, layer, &cache);
  Tensor r(y.shape());
  fill_uniform(r, rng);
  const auto grads = hypervox::conv3d_backward(r, cache, layer, true);

  std::vector<double> xd = to_double(x), wd = to_double(layer.weights), bd = to_double(layer.bias);
  const std::vector<double> rd = to_double(r);
  auto loss = [&] {
    const auto out = conv3d_direct(xd, c.input_shape, wd, bd, c.geom, nullptr);
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += rd[i] * out[i];
    return l;
  };
  double worst = relative_error(to_double(grads.input), numeric_gradient(xd, loss));
  worst = std::max(worst, relative_error(to_double(grads.weights), numeric_gradient(wd, loss)));
  worst = std::max(worst, relative_error(to_double(grads.bias), numeric_gradient(bd, loss)));
  return worst;
}

/// L = sum(r * (x W + b)).
inline double dense_gradient_case(Prng& rng) {
  const int in = pick(rng, 1, 40), out = pick(rng, 1, 12);
  auto layer = hypervox::DenseLayer::zeros(in, out);
  fill_uniform(layer.weights, rng);
  fill_uniform(layer.bias, rng);
  Tensor x({static_cast<std::size_t>(in)});
  fill_uniform(x, rng);
  Tensor r({static_cast<std::size_t>(out)});
  fill_uniform(r, rng);
  const auto grads = hypervox::dense_backward(r, x, layer);

  std::vector<double> xd = to_double(x), wd = to_double(layer.weights), bd = to_double(layer.bias);
  const std::vector<double> rd = to_double(r);
  auto loss = [&] {
    const auto y = dense_direct(xd, wd, bd);
    double l = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) l += rd[j] * y[j];
    return l;
  };
  double worst = relative_error(to_double(grads.input), numeric_gradient(xd, loss));
  worst = std::max(worst, relative_error(to_double(grads.weights), numeric_gradient(wd, loss)));
  worst = std::max(worst, relative_error(to_double(grads.bias), numeric_gradient(bd, loss)));
  return worst;
}

inline double softmax_ce_gradient_case(Prng& rng) {
  const int nclass = pick(rng, 2, 16);
  const double spread = 0.5 + 8.0 * rng.uniform();
  Tensor z({static_cast<std::size_t>(nclass)});
  fill_uniform(z, rng, -spread, spread);
  const auto label = static_cast<std::size_t>(rng.below(nclass));
  const auto fused = hypervox::softmax_cross_entropy(z, label);
  const Tensor g = hypervox::softmax_cross_entropy_backward(fused.probs, label);
  std::vector<double> zd = to_double(z);
  return relative_error(to_double(g), numeric_gradient(zd, [&] { return softmax_ce_direct(zd, label); }));
}

/// L = sum(r * w) + sum(s * b) + lambda * sum|w|; biases carry no penalty.
inline double l1_gradient_case(Prng& rng) {
  const int n = pick(rng, 1, 30), m = pick(rng, 1, 6);
  Tensor w({static_cast<std::size_t>(n)}), b({static_cast<std::size_t>(m)});
  for (float& v : w.data()) {
    const double mag = 0.01 + rng.uniform();
    v = static_cast<float>(rng.below(2) ? mag : -mag);
  }
  fill_uniform(b, rng);
  Tensor gw({static_cast<std::size_t>(n)}), gb({static_cast<std::size_t>(m)});
  fill_uniform(gw, rng, -0.1, 0.1);
  fill_uniform(gb, rng, -0.1, 0.1);
  const std::vector<double> r = to_double(gw), s = to_double(gb);
  const float lambda = static_cast<float>(0.01 + 0.1 * rng.uniform());
  const std::vector<hypervox::ParamRef> params{{"w", &w, &gw, false}, {"b", &b, &gb, true}};
  hypervox::apply_l1(params, lambda);

  std::vector<double> wd = to_double(w), bd = to_double(b);
  auto loss = [&] {
    double l = 0.0;
    for (std::size_t i = 0; i < wd.size(); ++i) l += r[i] * wd[i] + lambda * std::abs(wd[i]);
    for (std::size_t i = 0; i < bd.size(); ++i) l += s[i] * bd[i];
    return l;
  };
  return std::max(relative_error(to_double(gw), numeric_gradient(wd, loss)),
                  relative_error(to_double(gb), numeric_gradient(bd, loss)));
}

}  // namespace hvtest
