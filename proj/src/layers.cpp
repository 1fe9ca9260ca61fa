#include "hypervox/layers.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

#include "hypervox/error.hpp"

namespace hypervox {

std::string to_string(const Triple& t) {
  return std::to_string(t.spec) + "x" + std::to_string(t.h) + "x" + std::to_string(t.w);
}

int size_out(int size_in, int kernel, int pad, int stride) {
  if (size_in < 1 || kernel < 1 || stride < 1 || pad < 0) {
    throw GeometryError("invalid geometry: size_in=" + std::to_string(size_in) + " kernel=" +
                        std::to_string(kernel) + " pad=" + std::to_string(pad) +
                        " stride=" + std::to_string(stride));
  }
  if (kernel > size_in + 2 * pad) {
    throw GeometryError("kernel " + std::to_string(kernel) + " exceeds padded input " +
                        std::to_string(size_in + 2 * pad));
  }
  return (size_in - kernel + 2 * pad) / stride + 1;
}

bool size_out_discards(int size_in, int kernel, int pad, int stride) {
  return (size_in - kernel + 2 * pad) % stride != 0;
}

Shape Conv3dGeometry::output_shape(const Shape& input) const {
  if (input.size() != 4) {
    throw ShapeError("conv3d expects a [C,F,H,W] input, got " + shape_to_string(input));
  }
  if (static_cast<int>(input[0]) != in_channels) {
    throw ShapeError("conv3d expects " + std::to_string(in_channels) + " input channels, got " +
                     std::to_string(input[0]));
  }
  const int f = size_out(static_cast<int>(input[1]), kernel.spec, pad.spec, stride.spec);
  const int h = size_out(static_cast<int>(input[2]), kernel.h, pad.h, stride.h);
  const int w = size_out(static_cast<int>(input[3]), kernel.w, pad.w, stride.w);
  return {static_cast<std::size_t>(filters), static_cast<std::size_t>(f), static_cast<std::size_t>(h),
          static_cast<std::size_t>(w)};
}

Conv3dLayer Conv3dLayer::zeros(const Conv3dGeometry& geom) {
  Conv3dLayer layer;
  layer.geom = geom;
  layer.weights = Tensor({static_cast<std::size_t>(geom.filters), static_cast<std::size_t>(geom.in_channels),
                          static_cast<std::size_t>(geom.kernel.spec), static_cast<std::size_t>(geom.kernel.h),
                          static_cast<std::size_t>(geom.kernel.w)});
  layer.bias = Tensor({static_cast<std::size_t>(geom.filters)});
  return layer;
}

namespace {

struct ConvDims {
  int c, f, h, w;     // input
  int of, oh, ow;     // output
  std::size_t rows;   // in_channels * kernel volume
  std::size_t cols;   // output positions
};

ConvDims conv_dims(const Shape& in, const Conv3dGeometry& g) {
  const Shape out = g.output_shape(in);
  ConvDims d{};
  d.c = static_cast<int>(in[0]);
  d.f = static_cast<int>(in[1]);
  d.h = static_cast<int>(in[2]);
  d.w = static_cast<int>(in[3]);
  d.of = static_cast<int>(out[1]);
  d.oh = static_cast<int>(out[2]);
  d.ow = static_cast<int>(out[3]);
  d.rows = g.fan_in();
  d.cols = static_cast<std::size_t>(d.of) * d.oh * d.ow;
  return d;
}

// Unfolds every kernel window into one column. Out-of-range taps read the
// zero padding.
void im2col(const float* in, const ConvDims& d, const Conv3dGeometry& g, float* cols) {
  std::size_t row = 0;
  for (int c = 0; c < d.c; ++c) {
    for (int a = 0; a < g.kernel.spec; ++a) {
      for (int b = 0; b < g.kernel.h; ++b) {
        for (int e = 0; e < g.kernel.w; ++e, ++row) {
          float* dst = cols + row * d.cols;
          for (int z = 0; z < d.of; ++z) {
            const int iz = z * g.stride.spec - g.pad.spec + a;
            const bool z_ok = iz >= 0 && iz < d.f;
            for (int y = 0; y < d.oh; ++y) {
              const int iy = y * g.stride.h - g.pad.h + b;
              const bool zy_ok = z_ok && iy >= 0 && iy < d.h;
              const float* src = zy_ok ? in + ((static_cast<std::size_t>(c) * d.f + iz) * d.h + iy) * d.w : nullptr;
              for (int x = 0; x < d.ow; ++x) {
                const int ix = x * g.stride.w - g.pad.w + e;
                *dst++ = (zy_ok && ix >= 0 && ix < d.w) ? src[ix] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, const ConvDims& d, const Conv3dGeometry& g, float* in) {
  std::size_t row = 0;
  for (int c = 0; c < d.c; ++c) {
    for (int a = 0; a < g.kernel.spec; ++a) {
      for (int b = 0; b < g.kernel.h; ++b) {
        for (int e = 0; e < g.kernel.w; ++e, ++row) {
          const float* src = cols + row * d.cols;
          for (int z = 0; z < d.of; ++z) {
            const int iz = z * g.stride.spec - g.pad.spec + a;
            const bool z_ok = iz >= 0 && iz < d.f;
            for (int y = 0; y < d.oh; ++y) {
              const int iy = y * g.stride.h - g.pad.h + b;
              if (!z_ok || iy < 0 || iy >= d.h) {
                src += d.ow;
                continue;
              }
              float* dst = in + ((static_cast<std::size_t>(c) * d.f + iz) * d.h + iy) * d.w;
              for (int x = 0; x < d.ow; ++x, ++src) {
                const int ix = x * g.stride.w - g.pad.w + e;
                if (ix >= 0 && ix < d.w) dst[ix] += *src;
              }
            }
          }
        }
      }
    }
  }
}

// out[k, :] += sum_r a[k, r] * b[r, :], four output rows at a time so every
// row of b is streamed once per block.
void gemm_accumulate(const float* a, const float* b, float* out, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    float* o0 = out + i * n;
    float* o1 = o0 + n;
    float* o2 = o1 + n;
    float* o3 = o2 + n;
    const float* a0 = a + i * k;
    const float* a1 = a0 + k;
    const float* a2 = a1 + k;
    const float* a3 = a2 + k;
    for (std::size_t r = 0; r < k; ++r) {
      const float w0 = a0[r], w1 = a1[r], w2 = a2[r], w3 = a3[r];
      const float* br = b + r * n;
      for (std::size_t p = 0; p < n; ++p) {
        const float v = br[p];
        o0[p] += w0 * v;
        o1[p] += w1 * v;
        o2[p] += w2 * v;
        o3[p] += w3 * v;
      }
    }
  }
  for (; i < m; ++i) {
    float* o = out + i * n;
    const float* ai = a + i * k;
    for (std::size_t r = 0; r < k; ++r) {
      const float w = ai[r];
      const float* br = b + r * n;
      for (std::size_t p = 0; p < n; ++p) o[p] += w * br[p];
    }
  }
}

float dot(const float* x, const float* y, std::size_t n) {
  float acc[8] = {};
  std::size_t p = 0;
  for (; p + 8 <= n; p += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += x[p + j] * y[p + j];
  }
  float total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; p < n; ++p) total += x[p] * y[p];
  return total;
}

void check_conv_params(const Conv3dLayer& layer) {
  const auto& g = layer.geom;
  if (layer.weights.size() != g.filters * g.fan_in() || layer.bias.size() != static_cast<std::size_t>(g.filters)) {
    throw ShapeError("conv3d parameter tensors do not match the layer geometry");
  }
}

}  // namespace

Tensor conv3d_forward(const Tensor& input, const Conv3dLayer& layer, Conv3dCache* cache) {
  check_conv_params(layer);
  const auto& g = layer.geom;
  const ConvDims d = conv_dims(input.shape(), g);

  Tensor columns({d.rows, d.cols});
  im2col(input.raw(), d, g, columns.raw());

  Tensor out({static_cast<std::size_t>(g.filters), static_cast<std::size_t>(d.of), static_cast<std::size_t>(d.oh),
              static_cast<std::size_t>(d.ow)});
  float* o = out.raw();
  for (int k = 0; k < g.filters; ++k) std::fill_n(o + k * d.cols, d.cols, layer.bias[k]);
  gemm_accumulate(layer.weights.raw(), columns.raw(), o, static_cast<std::size_t>(g.filters), d.rows, d.cols);

  if (cache != nullptr) {
    cache->input_shape = input.shape();
    cache->columns = std::move(columns);
  }
  return out;
}

Conv3dGrads conv3d_backward(const Tensor& grad_out, const Conv3dCache& cache, const Conv3dLayer& layer,
                            bool want_input_grad) {
  check_conv_params(layer);
  const auto& g = layer.geom;
  const ConvDims d = conv_dims(cache.input_shape, g);
  const Shape expected{static_cast<std::size_t>(g.filters), static_cast<std::size_t>(d.of),
                       static_cast<std::size_t>(d.oh), static_cast<std::size_t>(d.ow)};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv3d_backward: grad_out " + shape_to_string(grad_out.shape()) + " but forward output was " +
                     shape_to_string(expected));
  }
  if (cache.columns.size() != d.rows * d.cols) {
    throw ShapeError("conv3d_backward: cache does not belong to this layer");
  }

  Conv3dGrads grads;
  grads.weights = Tensor(layer.weights.shape());
  grads.bias = Tensor(layer.bias.shape());
  const float* go = grad_out.raw();
  const float* cols = cache.columns.raw();

  for (int k = 0; k < g.filters; ++k) {
    const float* gk = go + k * d.cols;
    double b = 0.0;
    for (std::size_t p = 0; p < d.cols; ++p) b += gk[p];
    grads.bias[k] = static_cast<float>(b);
    float* gw = grads.weights.raw() + k * d.rows;
    for (std::size_t r = 0; r < d.rows; ++r) gw[r] = dot(gk, cols + r * d.cols, d.cols);
  }

  if (want_input_grad) {
    // grad_columns = W^T * grad_out, then fold the columns back.
    Tensor grad_cols({d.rows, d.cols});
    float* gc = grad_cols.raw();
    const float* w = layer.weights.raw();
    for (int k = 0; k < g.filters; ++k) {
      const float* gk = go + k * d.cols;
      const float* wk = w + k * d.rows;
      for (std::size_t r = 0; r < d.rows; ++r) {
        const float wr = wk[r];
        float* dst = gc + r * d.cols;
        for (std::size_t p = 0; p < d.cols; ++p) dst[p] += wr * gk[p];
      }
    }
    grads.input = Tensor(cache.input_shape);
    col2im_add(gc, d, g, grads.input.raw());
  }
  return grads;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  relu_inplace(y);
  return y;
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
}

Tensor relu_backward(const Tensor& grad, const Tensor& x) {
  if (grad.shape() != x.shape()) throw ShapeError("relu_backward shape mismatch");
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = x[i] > 0.0f ? grad[i] : 0.0f;
  return out;
}

Tensor dropout_forward(const Tensor& x, DropoutLayer& layer, Prng& rng) {
  if (!(layer.rate >= 0.0f && layer.rate < 1.0f)) {
    throw InputError("dropout rate must lie in [0, 1), got " + std::to_string(layer.rate));
  }
  if (layer.mode == Mode::Infer || layer.rate == 0.0f) {
    layer.mask = Tensor();
    return x;
  }
  const float keep_scale = 1.0f / (1.0f - layer.rate);
  layer.mask = Tensor(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float m = rng.uniform() >= layer.rate ? keep_scale : 0.0f;
    layer.mask[i] = m;
    y[i] = x[i] * m;
  }
  return y;
}

Tensor dropout_backward(const Tensor& grad, const DropoutLayer& layer) {
  if (layer.mask.empty()) return grad;
  if (layer.mask.shape() != grad.shape()) throw ShapeError("dropout_backward shape mismatch");
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = grad[i] * layer.mask[i];
  return out;
}

DenseLayer DenseLayer::zeros(int in_dim, int out_dim) {
  DenseLayer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.weights = Tensor({static_cast<std::size_t>(in_dim), static_cast<std::size_t>(out_dim)});
  layer.bias = Tensor({static_cast<std::size_t>(out_dim)});
  return layer;
}

Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
  if (x.size() != static_cast<std::size_t>(layer.in_dim)) {
    throw ShapeError("dense layer expects " + std::to_string(layer.in_dim) + " inputs, got " +
                     std::to_string(x.size()));
  }
  const auto out_dim = static_cast<std::size_t>(layer.out_dim);
  Tensor y = layer.bias;
  float* ys = y.raw();
  const float* w = layer.weights.raw();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float xi = x[i];
    const float* wi = w + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) ys[j] += xi * wi[j];
  }
  return y;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& x, const DenseLayer& layer) {
  const auto out_dim = static_cast<std::size_t>(layer.out_dim);
  if (grad_out.size() != out_dim || x.size() != static_cast<std::size_t>(layer.in_dim)) {
    throw ShapeError("dense_backward shape mismatch");
  }
  DenseGrads grads;
  grads.bias = reshape(grad_out, {out_dim});
  grads.weights = Tensor(layer.weights.shape());
  grads.input = Tensor(x.shape());
  const float* w = layer.weights.raw();
  float* gw = grads.weights.raw();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float xi = x[i];
    float acc = 0.0f;
    for (std::size_t j = 0; j < out_dim; ++j) {
      gw[i * out_dim + j] = xi * grad_out[j];
      acc += w[i * out_dim + j] * grad_out[j];
    }
    grads.input[i] = acc;
  }
  return grads;
}

Tensor softmax(const Tensor& logits) {
  if (logits.size() < 2) throw ShapeError("softmax needs at least two classes");
  const float max_logit = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor probs(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - max_logit);
    probs[i] = static_cast<float>(e);
    total += e;
  }
  for (float& p : probs.data()) p = static_cast<float>(p / total);
  return probs;
}

namespace {

void check_label(std::size_t label, std::size_t nclass) {
  if (label >= nclass) {
    throw InputError("label " + std::to_string(label) + " out of range for " + std::to_string(nclass) + " classes");
  }
}

}  // namespace

float cross_entropy(const Tensor& probs, std::size_t label) {
  check_label(label, probs.size());
  return -std::log(std::max(probs[label], FLT_MIN));
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  check_label(label, logits.size());
  SoftmaxLoss out{0.0f, softmax(logits)};
  const float max_logit = *std::max_element(logits.data().begin(), logits.data().end());
  double total = 0.0;
  for (float v : logits.data()) total += std::exp(static_cast<double>(v) - max_logit);
  out.loss = static_cast<float>(std::log(total) + max_logit - logits[label]);
  return out;
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, std::size_t label) {
  check_label(label, probs.size());
  Tensor grad = probs;
  grad[label] -= 1.0f;
  return grad;
}

}  // namespace hypervox
