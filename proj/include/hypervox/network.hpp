#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hypervox/layers.hpp"
#include "hypervox/netspec.hpp"
#include "hypervox/optim.hpp"
#include "hypervox/tensor.hpp"

namespace hypervox {

/// One built layer: parameters, gradient buffers and a freeze flag.
struct Stage {
  LayerSpec spec;
  Conv3dLayer conv;   // used when spec.is_conv()
  DenseLayer dense;   // used for FC stages
  Tensor grad_weights;
  Tensor grad_bias;
  bool frozen = false;

  Tensor& weights() { return spec.is_conv() ? conv.weights : dense.weights; }
  const Tensor& weights() const { return spec.is_conv() ? conv.weights : dense.weights; }
  Tensor& bias() { return spec.is_conv() ? conv.bias : dense.bias; }
  const Tensor& bias() const { return spec.is_conv() ? conv.bias : dense.bias; }
};

/// A named view of one parameter tensor, used by checkpoints.
struct NamedTensor {
  std::string name;
  const Tensor* tensor = nullptr;
};

class Network {
 public:
  /// Allocates every layer from the spec: MSRA weights, zero biases.
  static Network build(const NetworkSpec& spec, Prng& rng);

  const NetworkSpec& spec() const noexcept { return spec_; }
  Shape input_shape() const { return spec_.input_shape(); }
  int nclass() const noexcept { return spec_.nclass; }

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  /// Inference forward pass (dropout disabled regardless of mode).
  Tensor logits(const Tensor& voxel) const;
  Tensor probabilities(const Tensor& voxel) const;
  /// Arg-max class, ties broken towards the lowest index.
  std::size_t predict(const Tensor& voxel) const;

  /// Forward + backward on one labelled voxel; adds `weight` times the
  /// parameter gradients into the gradient buffers and returns the loss.
  /// Dropout is active only in Mode::Train.
  float accumulate_gradients(const Tensor& voxel, std::size_t label, Prng& dropout_rng, float weight);

  void zero_grad();

  std::vector<ParamRef> parameters();
  /// Parameters of non-frozen stages only.
  std::vector<ParamRef> trainable_parameters();
  std::vector<NamedTensor> named_tensors() const;

  /// Counted over the allocated tensors.
  std::size_t parameter_count() const;
  std::size_t trainable_parameter_count() const;

  void freeze_convolutions();

  std::vector<Stage>& stages() noexcept { return stages_; }
  const std::vector<Stage>& stages() const noexcept { return stages_; }

 private:
  Network(NetworkSpec spec, std::vector<Stage> stages);

  void check_voxel(const Tensor& voxel) const;

  NetworkSpec spec_;
  std::vector<Stage> stages_;
  Mode mode_ = Mode::Train;
};

inline Network build(const NetworkSpec& spec, Prng& rng) { return Network::build(spec, rng); }

/// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const float> values);

}  // namespace hypervox
