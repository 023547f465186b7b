#pragma once

// Under-sampling patterns: the sigmoid probability map over trainable logits,
// renormalization to a target sampling ratio, binary sampling with a
// straight-through gradient, the sigmoid-relaxed sampling baseline, the
// deterministic top-fraction pattern and variable-density patterns.

#include "loupe/autodiff.hpp"
#include "loupe/numerics.hpp"

namespace loupe {

enum class SamplingMode
{
  Binary, // hard Bernoulli draw, straight-through backward
  Approx, // sigmoid relaxation of the draw
};

char const *to_string(SamplingMode m);
SamplingMode sampling_mode_from_string(std::string const &s);

struct PatternParams
{
  RTensor logits;      // [H,W]
  double slope = 0.25; // a
  double ratio = 0.1;  // gamma, overall sampled fraction including calib
  RTensor calib;       // [H,W] in {0,1}

  // a > 0, 0 < gamma < 1, shapes agree, mean(calib) < gamma.
  void validate() const;
};

// Binary [H,W] mask with a centered size x size block set to 1. The block
// covers rows h/2 - size/2 ... h/2 - size/2 + size - 1 (same for columns).
RTensor centered_calibration(std::size_t h, std::size_t w, std::size_t size);

std::size_t count_ones(RTensor const &mask);

RTensor probability_map(RTensor const &logits, double slope);

/// Rescales P so the overall mean equals `ratio` with the calibration block
/// forced to 1. With M the required mean over non-calibration locations and
/// mu their current mean: P' = P M / mu when mu >= M, otherwise
/// P' = 1 - (1 - P)(1 - M)/(1 - mu). Both branches stay inside [0, 1].
/// Throws NumericError when the calibration block alone exceeds the budget.
RTensor renormalize(RTensor const &prob, double ratio, RTensor const &calib);

// u = 1 where z < P' for fresh z ~ U[0,1).
RTensor sample_binary(RTensor const &prob, Rng &rng);
RTensor threshold(RTensor const &prob, RTensor const &z);
// sigmoid(b (P' - z)).
RTensor sample_approx(RTensor const &prob, RTensor const &z, double b);

/// Calibration block plus the largest P' among the remaining locations, with
/// ties going to the lower row-major index; floor(ratio H W) ones in total.
RTensor topk_pattern(RTensor const &prob, double ratio, RTensor const &calib);

// Sampling density c (1 - r/r_max)^d on non-calibration locations, c found by
// bisection so the expected overall mean (calibration included) is `ratio`.
// r is the normalized distance from the k-space center.
RTensor vd_density(std::size_t h, std::size_t w, double ratio, double exponent, RTensor const &calib);
// One Bernoulli draw from vd_density; calibration forced to 1.
RTensor vd_pattern(std::size_t h, std::size_t w, double ratio, double exponent, RTensor const &calib, Rng &rng);

namespace ad {

Var probability_map(Var logits, double slope);
Var renormalize(Var prob, double ratio, RTensor const &calib);
// Forward 1{z < P'}; backward identity onto P'.
Var sample_binary(Var prob, RTensor const &z);
Var sample_approx(Var prob, RTensor const &z, double b);

// Full pattern network: logits -> probability map -> renormalize -> sample.
// In Approx mode the calibration block is overwritten with exact ones.
Var pattern_mask(Var logits, PatternParams const &p, SamplingMode mode, RTensor const &z, double approx_slope);

} // namespace ad

} // namespace loupe
