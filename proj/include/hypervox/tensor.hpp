#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hypervox {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major f32 array. The last axis varies fastest.
///
/// Feature maps use the axis order (channels, spectral, height, width).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(float value);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  friend Tensor reshape(Tensor t, Shape new_shape);

  Shape shape_;
  std::vector<float> data_;
};

/// Reinterprets the buffer under a new shape. Throws ShapeError when the
/// element counts differ. Moves the buffer, so no copy is made for rvalues.
Tensor reshape(Tensor t, Shape new_shape);

double sum(const Tensor& t);
/// y += alpha * x
void axpy(float alpha, const Tensor& x, Tensor& y);
void scale_inplace(Tensor& t, float factor);

/// Deterministic generator: std::mt19937_64 (fully specified by the C++
/// standard) with distributions implemented here so that sequences do not
/// depend on the standard library vendor.
class Prng {
 public:
  explicit Prng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, bound). Unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Independent seed for a named sub-stream (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

template <typename T>
void shuffle(std::span<T> items, Prng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// k distinct indices drawn from [0, pool_size). With k == pool_size the
/// result is a permutation.
std::vector<std::size_t> sample_indices_without_replacement(Prng& rng, std::size_t pool_size,
                                                            std::size_t k);

}  // namespace hypervox
