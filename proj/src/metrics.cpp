#include "loupe/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace loupe {

namespace {

void check_pair(char const *op, CTensor const &x, CTensor const &ref)
{
  if (x.shape() != ref.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(x.shape()) + " and " + shape_str(ref.shape()) +
                     " differ");
  }
}

std::vector<double> magnitude(CTensor const &x)
{
  std::vector<double> m(x.size());
  std::transform(x.values().begin(), x.values().end(), m.begin(), [](Cx v) { return std::abs(v); });
  return m;
}

double peak(std::vector<double> const &m, char const *op)
{
  double const p = m.empty() ? 0.0 : *std::max_element(m.begin(), m.end());
  if (!(p > 0)) {
    throw NumericError(std::string(op) + ": reference image is identically zero");
  }
  return p;
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window()
{
  std::array<double, kWin> g{};
  double s = 0;
  for (int i = 0; i < kWin; ++i) {
    double const d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    s += g[i];
  }
  for (auto &v : g) {
    v /= s;
  }
  return g;
}

} // namespace

double psnr(CTensor const &x, CTensor const &ref)
{
  check_pair("psnr", x, ref);
  auto const a = magnitude(x), b = magnitude(ref);
  double const p = peak(b, "psnr");
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mse += (a[i] - b[i]) * (a[i] - b[i]);
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0) {
    return kPsnrCap;
  }
  return std::min(kPsnrCap, 10.0 * std::log10(p * p / mse));
}

double ssim(CTensor const &x, CTensor const &ref)
{
  check_pair("ssim", x, ref);
  if (x.rank() != 2 || x.dim(0) < kWin || x.dim(1) < kWin) {
    throw ShapeError("ssim: expected [H,W] with H, W >= 11, got " + shape_str(x.shape()));
  }
  auto const a = magnitude(x), b = magnitude(ref);
  double const range = peak(b, "ssim");
  if (a == b) {
    return 1.0;
  }
  double const c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  auto const g = gaussian_window();
  std::size_t const h = x.dim(0), w = x.dim(1);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + kWin <= h; ++r) {
    for (std::size_t c = 0; c + kWin <= w; ++c) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          double const wt = g[i] * g[j];
          std::size_t const k = (r + i) * w + c + j;
          mx += wt * a[k];
          my += wt * b[k];
          xx += wt * a[k] * a[k];
          yy += wt * b[k] * b[k];
          xy += wt * a[k] * b[k];
        }
      }
      double const vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

Summary aggregate(std::span<double const> values)
{
  if (values.empty()) {
    throw Error("aggregate: no values");
  }
  Summary s;
  s.n = values.size();
  for (double v : values) {
    s.mean += v;
  }
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0;
    for (double v : values) {
      ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

} // namespace loupe
