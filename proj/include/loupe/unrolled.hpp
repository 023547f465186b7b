#pragma once

// Unrolled reconstruction network: a shared-weight residual CNN denoiser
// alternating with conjugate-gradient data-consistency solves.

#include "loupe/autodiff.hpp"
#include "loupe/numerics.hpp"

#include <memory>
#include <vector>

namespace loupe {

struct UnrollConfig
{
  std::size_t blocks = 5;    // K
  std::size_t cg_iters = 10; // n_cg
  void validate() const;
};

// Parameter names used in the store.
namespace param {
std::string conv_weight(std::size_t layer); // layer 1..5
std::string norm_scale(std::size_t layer);  // layer 1..4
std::string norm_shift(std::size_t layer);
inline constexpr char const *kRho = "dc.rho";
inline constexpr char const *kLogits = "pattern.logits";
} // namespace param

inline constexpr std::size_t kDenoiserLayers = 5;

// Adds five 3x3 conv layers (2 -> C -> C -> C -> C -> 2) with uniform
// +-1/sqrt(fan_in) weights, and four instance-norm affines (scale 1, shift 0).
void init_denoiser(ad::ParamStore &store, std::size_t channels, Rng &rng);
std::size_t denoiser_channels(ad::ParamStore const &store);

namespace ad {
/// Residual denoiser on a [H,W,2] image: conv-IN-ReLU x4, a final conv, then
/// the input is added back.
Var denoise(Var x, ParamVars const &params);
} // namespace ad
CTensor denoise(CTensor const &x, ad::ParamStore const &params);

// (A^H A + lambda I) applied to an image, A = mask ⊙ F S_j. The mask enters once.
class NormalOperator
{
public:
  NormalOperator(CTensor const &sens, RTensor const &mask, double lambda);
  // Optionally stores the coil k-space F S_j in (Nc*H*W entries) into `fs_in`.
  void apply(Cx const *in, Cx *out, Cx *fs_in = nullptr) const;
  std::size_t image_size() const { return h_ * w_; }
  std::size_t coils() const { return nc_; }

private:
  CTensor const &sens_;
  RTensor const &mask_;
  double lambda_;
  std::size_t nc_, h_, w_;
  mutable std::vector<Cx> scratch_;
};

/// n_cg CG iterations from x0 = 0 on (A^H A + lambda I) x = rhs. Stops early
/// only on an exactly zero residual. `residuals`, when given, receives
/// ||(A^H A + lambda I) x_k - rhs|| / ||rhs|| for k = 0..n.
CTensor cg_solve(CTensor const &rhs, CTensor const &sens, RTensor const &mask, double lambda, std::size_t n_cg,
                 std::vector<double> *residuals = nullptr);

/// Solves (A^H A + lambda I) x = A^H b + lambda z; b is [Nc,H,W] k-space and
/// A^H applies the mask once.
CTensor data_consistency(CTensor const &z, CTensor const &b, CTensor const &sens, RTensor const &mask, double lambda,
                         std::size_t n_cg);

namespace ad {

// Tape node for the unrolled CG loop. Its backward pass is the exact reverse
// sweep of the fixed-iteration recursion, with gradients for rhs, the mask
// and lambda (a scalar node).
Var cg_solve(Var rhs, Var mask, Var lambda, std::shared_ptr<CTensor const> sens, std::size_t n_cg);
Var data_consistency(Var z, CTensor const &b, std::shared_ptr<CTensor const> sens, Var mask, Var lambda,
                     std::size_t n_cg);

struct ModlOutput
{
  Var zero_filled;
  std::vector<Var> blocks; // x^1 .. x^K
};

/// x^0 = A^H b (mask applied once), then for each block
/// x^k = DC(denoise(x^{k-1})) with lambda = exp(rho).
ModlOutput modl_forward(Tape &tape, CTensor const &kspace, std::shared_ptr<CTensor const> sens, Var mask,
                        ParamVars const &params, UnrollConfig const &cfg);

/// sum_k ||x^k - x*||_1 with |re| + |im| per entry.
Var training_loss(std::vector<Var> const &xs, CTensor const &label);

} // namespace ad

// Gradient-free forward; returns x^1 .. x^K.
std::vector<CTensor> modl_reconstruct(CTensor const &kspace, CTensor const &sens, RTensor const &mask,
                                      ad::ParamStore const &params, UnrollConfig const &cfg);

} // namespace loupe
