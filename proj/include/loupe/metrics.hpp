#pragma once

// Image quality on magnitude images. The dynamic range is max |ref|.

#include "loupe/numerics.hpp"

#include <span>

namespace loupe {

inline constexpr double kPsnrCap = 200.0;

/// 10 log10(max|ref|^2 / MSE(|x|, |ref|)), capped at kPsnrCap (also returned
/// for zero error). Throws when ref is identically zero.
double psnr(CTensor const &x, CTensor const &ref);

/// Mean SSIM over all valid 11x11 windows (Gaussian, sigma 1.5), K1 = 0.01,
/// K2 = 0.03. Identical magnitudes give exactly 1.
double ssim(CTensor const &x, CTensor const &ref);

struct Summary
{
  double mean = 0;
  double std = 0; // N-1 denominator, 0 when n == 1
  std::size_t n = 0;
  bool single() const { return n == 1; }
};

Summary aggregate(std::span<double const> values);

} // namespace loupe
