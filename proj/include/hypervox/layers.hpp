#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "hypervox/tensor.hpp"

namespace hypervox {

/// Per-axis triple in feature-map order: spectral, height, width.
struct Triple {
  int spec = 1;
  int h = 1;
  int w = 1;

  friend bool operator==(const Triple&, const Triple&) = default;
};

std::string to_string(const Triple& t);

/// Output length of one axis: floor((in - kernel + 2*pad) / stride) + 1.
/// Throws GeometryError when the kernel does not fit the padded input.
int size_out(int size_in, int kernel, int pad, int stride);

/// True when the division in size_out is inexact, i.e. trailing input
/// positions are never covered by a kernel window.
bool size_out_discards(int size_in, int kernel, int pad, int stride);

enum class Mode { Train, Infer };

struct Conv3dGeometry {
  int in_channels = 1;
  int filters = 1;
  Triple kernel;
  Triple stride;
  Triple pad{0, 0, 0};

  std::size_t kernel_volume() const {
    return static_cast<std::size_t>(kernel.spec) * kernel.h * kernel.w;
  }
  std::size_t fan_in() const { return static_cast<std::size_t>(in_channels) * kernel_volume(); }
  std::size_t param_count() const { return filters * fan_in() + filters; }
  /// [C_in, F, H, W] -> [filters, F', H', W']
  Shape output_shape(const Shape& input) const;
};

/// Volumetric convolution. Also serves 1D spectral layers (1x1 spatial kernel)
/// and strided "ConvPool" layers.
struct Conv3dLayer {
  Conv3dGeometry geom;
  Tensor weights;  // [filters, in_channels, k_spec, k_h, k_w]
  Tensor bias;     // [filters]

  static Conv3dLayer zeros(const Conv3dGeometry& geom);
};

/// What backward needs from the forward pass.
struct Conv3dCache {
  Shape input_shape;
  Tensor columns;  // unfolded input, [in_channels * kernel_volume, out positions]
};

Tensor conv3d_forward(const Tensor& input, const Conv3dLayer& layer, Conv3dCache* cache = nullptr);

struct Conv3dGrads {
  Tensor input;  // empty when not requested
  Tensor weights;
  Tensor bias;
};

Conv3dGrads conv3d_backward(const Tensor& grad_out, const Conv3dCache& cache, const Conv3dLayer& layer,
                            bool want_input_grad = true);

Tensor relu(const Tensor& x);
void relu_inplace(Tensor& x);
/// Passes grad where x > 0.
Tensor relu_backward(const Tensor& grad, const Tensor& x);

struct DropoutLayer {
  float rate = 0.5f;
  Mode mode = Mode::Train;
  Tensor mask;  // per-element scale of the last train-mode forward
};

/// Inverted dropout: in train mode each element survives with probability
/// (1 - rate) and is scaled by 1 / (1 - rate). Infer mode is the identity.
Tensor dropout_forward(const Tensor& x, DropoutLayer& layer, Prng& rng);
Tensor dropout_backward(const Tensor& grad, const DropoutLayer& layer);

struct DenseLayer {
  int in_dim = 1;
  int out_dim = 1;
  Tensor weights;  // [in_dim, out_dim]
  Tensor bias;     // [out_dim]

  static DenseLayer zeros(int in_dim, int out_dim);
  std::size_t param_count() const {
    return static_cast<std::size_t>(in_dim) * out_dim + out_dim;
  }
};

/// x is any tensor with in_dim elements; returns [out_dim].
Tensor dense_forward(const Tensor& x, const DenseLayer& layer);

struct DenseGrads {
  Tensor input;  // same shape as x
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& x, const DenseLayer& layer);

/// Max-subtracted softmax over a vector of logits.
Tensor softmax(const Tensor& logits);

/// -log(probs[label]), with probs floored at the smallest normal float.
float cross_entropy(const Tensor& probs, std::size_t label);

struct SoftmaxLoss {
  float loss;
  Tensor probs;
};

/// Softmax and cross-entropy fused through log-sum-exp, so large logit gaps
/// give the exact loss instead of a clamped one.
SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t label);

/// d loss / d logits = probs - onehot(label).
Tensor softmax_cross_entropy_backward(const Tensor& probs, std::size_t label);

}  // namespace hypervox
