#include "hypervox/tensor.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "hypervox/error.hpp"

namespace hypervox {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_dims(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not fit shape " +
                     shape_to_string(shape_));
  }
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor reshape(Tensor t, Shape new_shape) {
  check_dims(new_shape);
  if (shape_product(new_shape) != t.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(t.shape()) + " to " + shape_to_string(new_shape));
  }
  t.shape_ = std::move(new_shape);
  return t;
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += v;
  return acc;
}

void axpy(float alpha, const Tensor& x, Tensor& y) {
  if (x.shape() != y.shape()) {
    throw ShapeError("axpy shape mismatch " + shape_to_string(x.shape()) + " vs " + shape_to_string(y.shape()));
  }
  const float* xs = x.raw();
  float* ys = y.raw();
  for (std::size_t i = 0, n = x.size(); i < n; ++i) ys[i] += alpha * xs[i];
}

void scale_inplace(Tensor& t, float factor) {
  for (float& v : t.data()) v *= factor;
}

Prng::Prng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Prng::next_u64() { return engine_(); }

double Prng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Prng::below(std::uint64_t bound) {
  if (bound == 0) throw InputError("Prng::below called with bound 0");
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

double Prng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<std::size_t> sample_indices_without_replacement(Prng& rng, std::size_t pool_size, std::size_t k) {
  if (k > pool_size) {
    throw InputError("cannot sample " + std::to_string(k) + " distinct indices from a pool of " +
                     std::to_string(pool_size));
  }
  std::vector<std::size_t> pool(pool_size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k slots end up uniformly sampled.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool_size - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace hypervox
