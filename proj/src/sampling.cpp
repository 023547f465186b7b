#include "loupe/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace loupe {

char const *to_string(SamplingMode m)
{
  return m == SamplingMode::Binary ? "BS" : "AS";
}

SamplingMode sampling_mode_from_string(std::string const &s)
{
  if (s == "BS" || s == "bs") {
    return SamplingMode::Binary;
  }
  if (s == "AS" || s == "as") {
    return SamplingMode::Approx;
  }
  throw ConfigError("unknown sampling mode '" + s + "' (expected BS or AS)");
}

void PatternParams::validate() const
{
  if (!(slope > 0)) {
    throw ConfigError("pattern slope must be positive");
  }
  if (!(ratio > 0 && ratio < 1)) {
    throw ConfigError("sampling ratio must lie in (0, 1)");
  }
  if (logits.rank() != 2 || calib.shape() != logits.shape()) {
    throw ShapeError("pattern logits " + shape_str(logits.shape()) + " and calibration " +
                     shape_str(calib.shape()) + " must both be [H,W]");
  }
  if (static_cast<double>(count_ones(calib)) >= ratio * static_cast<double>(calib.size())) {
    throw ConfigError("calibration region does not fit inside the sampling budget");
  }
}

RTensor centered_calibration(std::size_t h, std::size_t w, std::size_t size)
{
  if (size > h || size > w) {
    throw ConfigError("calibration block larger than the k-space grid");
  }
  RTensor m(Shape{h, w}, 0.0);
  std::size_t const r0 = h / 2 - size / 2, c0 = w / 2 - size / 2;
  for (std::size_t r = r0; r < r0 + size; ++r) {
    for (std::size_t c = c0; c < c0 + size; ++c) {
      m(r, c) = 1.0;
    }
  }
  return m;
}

std::size_t count_ones(RTensor const &mask)
{
  return static_cast<std::size_t>(std::count(mask.values().begin(), mask.values().end(), 1.0));
}

namespace {

double sigmoid(double x)
{
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double const e = std::exp(x);
  return e / (1.0 + e);
}

void require_same(char const *op, RTensor const &a, RTensor const &b)
{
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

struct Renorm
{
  bool scale_branch; // P' = P * factor, else P' = 1 - (1 - P) * factor
  double factor;
  double target; // M
  double mean;   // mu
  std::size_t free_count;
};

Renorm renorm_coefficients(RTensor const &prob, double ratio, RTensor const &calib)
{
  require_same("renormalize", prob, calib);
  auto const n = static_cast<double>(prob.size());
  std::size_t const nc = count_ones(calib);
  std::size_t const nf = prob.size() - nc;
  double const target = (ratio * n - static_cast<double>(nc)) / static_cast<double>(nf);
  if (!(target > 0) || nf == 0) {
    throw NumericError("renormalize: calibration region exceeds the sampling budget");
  }
  if (target >= 1) {
    throw NumericError("renormalize: sampling ratio leaves nothing to choose");
  }
  double mean = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (calib[i] != 1.0) {
      mean += prob[i];
    }
  }
  mean /= static_cast<double>(nf);
  if (mean >= target) {
    return {true, target / mean, target, mean, nf};
  }
  return {false, (1 - target) / (1 - mean), target, mean, nf};
}

RTensor apply_renorm(RTensor const &prob, RTensor const &calib, Renorm const &r)
{
  RTensor out(prob.shape());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (calib[i] == 1.0) {
      out[i] = 1.0;
    } else {
      out[i] = r.scale_branch ? prob[i] * r.factor : 1.0 - (1.0 - prob[i]) * r.factor;
    }
  }
  return out;
}

} // namespace

RTensor probability_map(RTensor const &logits, double slope)
{
  RTensor p(logits.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = sigmoid(slope * logits[i]);
  }
  return p;
}

RTensor renormalize(RTensor const &prob, double ratio, RTensor const &calib)
{
  return apply_renorm(prob, calib, renorm_coefficients(prob, ratio, calib));
}

RTensor threshold(RTensor const &prob, RTensor const &z)
{
  require_same("threshold", prob, z);
  RTensor u(prob.shape());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = z[i] < prob[i] ? 1.0 : 0.0;
  }
  return u;
}

RTensor sample_binary(RTensor const &prob, Rng &rng)
{
  return threshold(prob, uniform(rng, prob.shape()));
}

RTensor sample_approx(RTensor const &prob, RTensor const &z, double b)
{
  require_same("sample_approx", prob, z);
  RTensor u(prob.shape());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = sigmoid(b * (prob[i] - z[i]));
  }
  return u;
}

RTensor topk_pattern(RTensor const &prob, double ratio, RTensor const &calib)
{
  require_same("topk_pattern", prob, calib);
  // The epsilon keeps products such as 0.3 * 100 = 29.999... from losing a sample.
  auto const budget = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(prob.size()) + 1e-9));
  std::size_t const nc = count_ones(calib);
  if (budget < nc) {
    throw NumericError("topk_pattern: calibration region exceeds the sampling budget");
  }
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (calib[i] != 1.0) {
      free.push_back(i);
    }
  }
  std::size_t const pick = std::min(budget - nc, free.size());
  std::partial_sort(free.begin(), free.begin() + static_cast<std::ptrdiff_t>(pick), free.end(),
                    [&](std::size_t a, std::size_t b) { return prob[a] > prob[b] || (prob[a] == prob[b] && a < b); });
  RTensor u = calib;
  for (std::size_t k = 0; k < pick; ++k) {
    u[free[k]] = 1.0;
  }
  return u;
}

RTensor vd_density(std::size_t h, std::size_t w, double ratio, double exponent, RTensor const &calib)
{
  if (!(exponent >= 0)) {
    throw ConfigError("vd_density: exponent must be non-negative");
  }
  if (calib.shape() != Shape{h, w}) {
    throw ShapeError("vd_density: calibration mask must be " + shape_str(Shape{h, w}));
  }
  RTensor radius(Shape{h, w});
  double rmax = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double const y = (static_cast<double>(r) - static_cast<double>(h / 2)) / (h / 2.0);
      double const x = (static_cast<double>(c) - static_cast<double>(w / 2)) / (w / 2.0);
      radius(r, c) = std::sqrt(x * x + y * y);
      rmax = std::max(rmax, radius(r, c));
    }
  }
  RTensor shape_fn(Shape{h, w});
  for (std::size_t i = 0; i < shape_fn.size(); ++i) {
    shape_fn[i] = std::pow(1.0 - radius[i] / rmax, exponent);
  }
  auto const n = static_cast<double>(h * w);
  auto expected_mean = [&](double c) {
    double s = 0;
    for (std::size_t i = 0; i < shape_fn.size(); ++i) {
      s += calib[i] == 1.0 ? 1.0 : std::min(1.0, c * shape_fn[i]);
    }
    return s / n;
  };
  if (expected_mean(0) >= ratio) {
    throw NumericError("vd_density: calibration region exceeds the sampling budget");
  }
  double lo = 0, hi = 1;
  while (expected_mean(hi) < ratio) {
    hi *= 2;
    if (hi > 1e15) {
      throw NumericError("vd_density: target ratio infeasible after clipping to [0, 1]");
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double const mid = 0.5 * (lo + hi);
    (expected_mean(mid) < ratio ? lo : hi) = mid;
  }
  double const c = 0.5 * (lo + hi);
  RTensor p(Shape{h, w});
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = calib[i] == 1.0 ? 1.0 : std::min(1.0, c * shape_fn[i]);
  }
  return p;
}

RTensor vd_pattern(std::size_t h, std::size_t w, double ratio, double exponent, RTensor const &calib, Rng &rng)
{
  RTensor u = sample_binary(vd_density(h, w, ratio, exponent, calib), rng);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (calib[i] == 1.0) {
      u[i] = 1.0;
    }
  }
  return u;
}

namespace ad {

Var probability_map(Var logits, double slope)
{
  return sigmoid(scale(logits, slope));
}

Var renormalize(Var prob, double ratio, RTensor const &calib)
{
  Renorm const r = renorm_coefficients(prob.value(), ratio, calib);
  RTensor out = apply_renorm(prob.value(), calib, r);
  Tape *t = &prob.tape();
  int const ip = prob.id();
  return t->record(Op::Renormalize, {prob}, std::move(out), [t, ip, r, calib](RTensor const &g, std::span<RTensor *> pg) {
    auto const &p = t->value(ip);
    auto const nf = static_cast<double>(r.free_count);
    // Mean-coupling term shared by every free location.
    double coupled = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (calib[i] != 1.0) {
        coupled += g[i] * (r.scale_branch ? p[i] : 1.0 - p[i]);
      }
    }
    double const dmean = r.scale_branch ? -r.target / (r.mean * r.mean) * coupled / nf
                                        : -(1 - r.target) / ((1 - r.mean) * (1 - r.mean)) * coupled / nf;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (calib[i] != 1.0) {
        (*pg[0])[i] += g[i] * r.factor + dmean;
      }
    }
  });
}

Var sample_binary(Var prob, RTensor const &z)
{
  return straight_through(prob, threshold(prob.value(), z));
}

Var sample_approx(Var prob, RTensor const &z, double b)
{
  if (z.shape() != prob.shape()) {
    throw ShapeError("sample_approx: z " + shape_str(z.shape()) + " vs P " + shape_str(prob.shape()));
  }
  Tape &t = prob.tape();
  return sigmoid(scale(sub(prob, t.constant(z)), b));
}

Var pattern_mask(Var logits, PatternParams const &p, SamplingMode mode, RTensor const &z, double approx_slope)
{
  Var prob = renormalize(probability_map(logits, p.slope), p.ratio, p.calib);
  if (mode == SamplingMode::Binary) {
    return sample_binary(prob, z);
  }
  Tape &t = logits.tape();
  RTensor keep(p.calib.shape());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    keep[i] = 1.0 - p.calib[i];
  }
  return add(mul(sample_approx(prob, z, approx_slope), t.constant(keep)), t.constant(p.calib));
}

} // namespace ad

} // namespace loupe
