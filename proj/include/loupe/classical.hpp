#pragma once

// Non-learned reconstructions: zero-filled adjoint and isotropic-TV
// regularized SENSE solved with a first-order primal-dual scheme.

#include "loupe/numerics.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace loupe {

// A^H (mask ⊙ b).
CTensor zero_filled(CTensor const &kspace, CTensor const &sens, RTensor const &mask);

// Forward differences with Neumann boundary (last row/column difference is 0).
std::pair<CTensor, CTensor> grad2d(CTensor const &x);
// Negative adjoint of grad2d.
CTensor div2d(CTensor const &dx, CTensor const &dy);
double tv_iso(CTensor const &x);

using LinearOp = std::function<CTensor(CTensor const &)>;

/// Largest singular value of `op` by power iteration on op^H op, starting from
/// a fixed pseudo-random vector. Stops when the relative change drops below
/// 1e-6 or after `iters` steps. A zero operator yields 0.
double power_method_opnorm(LinearOp const &op, LinearOp const &adjoint, Shape const &shape, std::size_t iters = 50);

struct TVConfig
{
  double alpha = 2e-3;
  std::size_t iters = 200;
  // Step sizes; <= 0 selects 0.99 / L with L the norm of the stacked (A, grad) operator.
  double tau = 0;
  double sigma = 0;
};

struct TVResult
{
  CTensor image;
  std::vector<double> objective; // per iteration, after the primal update
  double step_norm = 0;          // L used for the step sizes
};

/// sum_j ||mask ⊙ (F S_j x) - mask ⊙ b_j||^2 + alpha * TV_iso(x)
double tv_objective(CTensor const &x, CTensor const &kspace, CTensor const &sens, RTensor const &mask, double alpha);

/// Chambolle-Pock iterations starting from the zero-filled image. Throws
/// NumericError when the objective rises for 10 consecutive iterations or
/// when tau * sigma * L^2 > 1.
TVResult tv_recon(CTensor const &kspace, CTensor const &sens, RTensor const &mask, TVConfig const &cfg);

} // namespace loupe
