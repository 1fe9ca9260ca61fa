#include "hypervox/optim.hpp"

#include <algorithm>
#include <cmath>

#include "hypervox/error.hpp"

namespace hypervox {

int LrSchedule::step_epochs() const { return std::max(1, max_epoch / 3); }

int LrSchedule::drop_epoch(int i) const { return (i + 1) * step_epochs(); }

float lr_at(const LrSchedule& sched, int epoch) {
  if (epoch < 0 || epoch >= sched.max_epoch) {
    throw InputError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(sched.max_epoch) + ")");
  }
  const int drops = std::min(epoch / sched.step_epochs(), sched.max_drops);
  double lr = sched.base_lr;
  for (int i = 0; i < drops; ++i) lr *= sched.factor;
  return static_cast<float>(lr);
}

namespace {

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace

void apply_l1(Tensor& grad, const Tensor& weight, float lambda) {
  if (grad.shape() != weight.shape()) throw ShapeError("apply_l1 shape mismatch");
  if (lambda == 0.0f) return;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += lambda * sign(weight[i]);
}

void apply_l1(std::span<const ParamRef> params, float lambda) {
  for (const auto& p : params) {
    if (!p.is_bias) apply_l1(*p.grad, *p.value, lambda);
  }
}

double l1_norm(std::span<const ParamRef> params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (p.is_bias) continue;
    for (float v : p.value->data()) total += std::fabs(v);
  }
  return total;
}

void sgd_update(Tensor& weight, Tensor& velocity, const Tensor& grad, float lr, float momentum) {
  if (weight.shape() != velocity.shape() || weight.shape() != grad.shape()) {
    throw ShapeError("sgd_update shape mismatch");
  }
  float* w = weight.raw();
  float* v = velocity.raw();
  const float* g = grad.raw();
  for (std::size_t i = 0, n = weight.size(); i < n; ++i) {
    v[i] = momentum * v[i] - lr * g[i];
    w[i] += v[i];
  }
}

SgdMomentum::SgdMomentum(std::vector<ParamRef> params, float momentum)
    : params_(std::move(params)), momentum_(momentum) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) {
    if (p.value == nullptr || p.grad == nullptr || p.value->shape() != p.grad->shape()) {
      throw ShapeError("parameter '" + p.name + "' has no matching gradient buffer");
    }
    velocity_.emplace_back(p.value->shape());
  }
}

void SgdMomentum::step(float lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    sgd_update(*params_[i].value, velocity_[i], *params_[i].grad, lr, momentum_);
  }
}

std::size_t SgdMomentum::state_size() const {
  std::size_t total = 0;
  for (const auto& v : velocity_) total += v.size();
  return total;
}

Tensor init_msra(const Shape& shape, std::size_t fan_in, Prng& rng) {
  if (fan_in == 0) throw InputError("MSRA init needs fan_in > 0");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor t(shape);
  for (float& v : t.data()) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

}  // namespace hypervox
