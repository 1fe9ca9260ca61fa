#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hypervox/tensor.hpp"

namespace hypervox {

/// A trainable tensor together with its gradient buffer.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool is_bias = false;
};

/// Step schedule: base_lr divided by `factor` every max_epoch/3 epochs,
/// at most two drops.
struct LrSchedule {
  float base_lr = 0.001f;
  int max_epoch = 30;
  float factor = 0.1f;
  int max_drops = 2;

  int step_epochs() const;
  /// Epoch at which drop `i` (0-based) happens.
  int drop_epoch(int i) const;
};

float lr_at(const LrSchedule& sched, int epoch);

/// grad += lambda * sign(weight) for every non-bias tensor; sign(0) = 0.
void apply_l1(std::span<const ParamRef> params, float lambda);
void apply_l1(Tensor& grad, const Tensor& weight, float lambda);

/// Sum of |w| over non-bias tensors, the penalty whose subgradient apply_l1 adds.
double l1_norm(std::span<const ParamRef> params);

/// Classical momentum: v <- momentum * v - lr * grad; w <- w + v.
void sgd_update(Tensor& weight, Tensor& velocity, const Tensor& grad, float lr, float momentum);

class SgdMomentum {
 public:
  explicit SgdMomentum(std::vector<ParamRef> params, float momentum = 0.9f);

  void step(float lr);

  float momentum() const noexcept { return momentum_; }
  const std::vector<ParamRef>& params() const noexcept { return params_; }
  const std::vector<Tensor>& velocity() const noexcept { return velocity_; }
  /// Number of scalar parameters carrying optimizer state.
  std::size_t state_size() const;

 private:
  std::vector<ParamRef> params_;
  std::vector<Tensor> velocity_;
  float momentum_;
};

/// He/MSRA init: i.i.d. N(0, 2 / fan_in).
Tensor init_msra(const Shape& shape, std::size_t fan_in, Prng& rng);

}  // namespace hypervox
