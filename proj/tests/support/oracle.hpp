#pragma once

// Reference implementations used only by tests. Everything here is written
// the slow, obvious way in double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hypervox/layers.hpp"
#include "hypervox/network.hpp"
#include "hypervox/tensor.hpp"

namespace hvtest {

using hypervox::Conv3dGeometry;
using hypervox::Shape;
using hypervox::Tensor;

inline std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

/// Zero-padded cross-correlation by direct summation.
/// input [C, F, H, W], weights [K, C, kf, kh, kw], output [K, F', H', W'].
inline std::vector<double> conv3d_direct(const std::vector<double>& in, const Shape& s, const std::vector<double>& w,
                                         const std::vector<double>& b, const Conv3dGeometry& g, Shape* out_shape) {
  const int C = static_cast<int>(s[0]), F = static_cast<int>(s[1]), H = static_cast<int>(s[2]),
            W = static_cast<int>(s[3]);
  const int kf = g.kernel.spec, kh = g.kernel.h, kw = g.kernel.w;
  const int Fo = (F + 2 * g.pad.spec - kf) / g.stride.spec + 1;
  const int Ho = (H + 2 * g.pad.h - kh) / g.stride.h + 1;
  const int Wo = (W + 2 * g.pad.w - kw) / g.stride.w + 1;
  if (out_shape) *out_shape = {static_cast<std::size_t>(g.filters), static_cast<std::size_t>(Fo),
                               static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)};
  std::vector<double> out(static_cast<std::size_t>(g.filters) * Fo * Ho * Wo, 0.0);
  for (int k = 0; k < g.filters; ++k)
    for (int of = 0; of < Fo; ++of)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = b[k];
          for (int c = 0; c < C; ++c)
            for (int df = 0; df < kf; ++df)
              for (int dh = 0; dh < kh; ++dh)
                for (int dw = 0; dw < kw; ++dw) {
                  const int f = of * g.stride.spec - g.pad.spec + df;
                  const int h = oh * g.stride.h - g.pad.h + dh;
                  const int x = ow * g.stride.w - g.pad.w + dw;
                  if (f < 0 || f >= F || h < 0 || h >= H || x < 0 || x >= W) continue;
                  acc += w[(((static_cast<std::size_t>(k) * C + c) * kf + df) * kh + dh) * kw + dw] *
                         in[((static_cast<std::size_t>(c) * F + f) * H + h) * W + x];
                }
          out[((static_cast<std::size_t>(k) * Fo + of) * Ho + oh) * Wo + ow] = acc;
        }
  return out;
}

/// y = x W + b with W stored [in, out].
inline std::vector<double> dense_direct(const std::vector<double>& x, const std::vector<double>& w,
                                        const std::vector<double>& b) {
  const std::size_t out = b.size();
  std::vector<double> y(b);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < out; ++j) y[j] += x[i] * w[i * out + j];
  return y;
}

inline double softmax_ce_direct(const std::vector<double>& z, std::size_t label) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s) - z[label];
}

/// Parameters of a network copied out to double, stage by stage.
struct DoubleParams {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

inline DoubleParams params_of(const hypervox::Network& net) {
  DoubleParams p;
  for (const auto& st : net.stages()) {
    p.weights.push_back(to_double(st.weights()));
    p.biases.push_back(to_double(st.bias()));
  }
  return p;
}

/// Inference forward of `net`'s architecture with parameters `p`, then the
/// cross-entropy of `label`.
inline double network_loss_direct(const hypervox::Network& net, const DoubleParams& p, const Tensor& voxel,
                                  std::size_t label) {
  std::vector<double> act = to_double(voxel);
  Shape shape = voxel.shape();
  const auto& stages = net.stages();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& st = stages[i];
    if (st.spec.is_conv()) {
      Shape out;
      act = conv3d_direct(act, shape, p.weights[i], p.biases[i], st.conv.geom, &out);
      shape = out;
    } else {
      act = dense_direct(act, p.weights[i], p.biases[i]);
      shape = {act.size()};
    }
    if (st.spec.relu && i + 1 < stages.size())
      for (double& v : act) v = std::max(v, 0.0);
  }
  return softmax_ce_direct(act, label);
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central difference of f along every coordinate of x.
template <typename F>
std::vector<double> numeric_gradient(std::vector<double>& x, F&& f, double eps = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f();
    x[i] = keep - eps;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

}  // namespace hvtest
