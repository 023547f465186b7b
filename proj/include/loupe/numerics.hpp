#pragma once

#include "loupe/error.hpp"

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace loupe {

using Cx = std::complex<double>;
using Shape = std::vector<std::size_t>;

std::size_t shape_size(Shape const &s);
std::string shape_str(Shape const &s);

// Dense row-major tensor. Complex tensors (CTensor) store interleaved
// (real, imag) double pairs, which is the layout of std::complex<double>.
template <typename T>
class Tensor
{
public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
    : shape_(std::move(shape))
    , data_(shape_size(shape_), fill)
  {
  }
  Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape))
    , data_(std::move(data))
  {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
    }
  }

  Shape const &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T *data() { return data_.data(); }
  T const *data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<T const> values() const { return data_; }
  std::vector<T> &storage() { return data_; }
  std::vector<T> const &storage() const { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  T const &operator[](std::size_t i) const { return data_[i]; }

  // 2-D access over the last two dimensions of a rank-2 tensor.
  T &operator()(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  T const &operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  void reshape(Shape s)
  {
    if (shape_size(s) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    }
    shape_ = std::move(s);
  }

  bool operator==(Tensor const &o) const = default;

private:
  Shape shape_;
  std::vector<T> data_;
};

using RTensor = Tensor<double>;
using CTensor = Tensor<Cx>;

bool all_finite(RTensor const &t);
bool all_finite(CTensor const &t);

double norm(CTensor const &t);
double norm(RTensor const &t);
// Hermitian inner product <a, b> = sum conj(a) * b.
Cx inner(CTensor const &a, CTensor const &b);

// Interleaved complex [dims...] <-> real [dims..., 2].
RTensor to_real_pairs(CTensor const &c);
CTensor from_real_pairs(RTensor const &r);

/// Centered orthonormal 2-D DFT over the last two dimensions:
/// fftshift(FFT(ifftshift(x))) / sqrt(H*W). Leading dimensions are batched.
/// The DC sample lands at (H/2, W/2). Throws NumericError on non-finite input.
CTensor fft2c(CTensor const &img);
/// Inverse (and adjoint) of fft2c.
CTensor ifft2c(CTensor const &ksp);

// In-place variants over `count` contiguous H*W planes; no finiteness check.
void fft2c_planes(Cx *data, std::size_t count, std::size_t h, std::size_t w);
void ifft2c_planes(Cx *data, std::size_t count, std::size_t h, std::size_t w);

// Seedable generator with a portable output sequence.
//
// The engine is std::mt19937_64, whose output for a given seed is fixed by
// the C++ standard. Doubles are formed from the top 53 bits of each draw,
// (x >> 11) * 2^-53, so uniform() is bit-identical on every conforming
// platform. Normal variates use Box-Muller on two uniform draws.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : seed_(seed)
    , engine_(seed)
  {
  }

  // Independent sub-stream: seed is splitmix64(seed ^ splitmix64(stream + 1)).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform(); // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [lo, hi].
  int integer(int lo, int hi);

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

RTensor uniform(Rng &rng, Shape const &shape);

} // namespace loupe
