#include "loupe/classical.hpp"
#include "loupe/metrics.hpp"
#include "loupe/mri.hpp"

#include <Eigen/Dense>
#include <catch_amalgamated.hpp>

#include <cmath>

using namespace loupe;
using Catch::Approx;

namespace {

CTensor randc(Rng &rng, Shape const &s)
{
  CTensor t(s);
  for (auto &v : t.values()) {
    v = {rng.normal(), rng.normal()};
  }
  return t;
}

double rel_diff(CTensor const &a, CTensor const &b)
{
  double num = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
  }
  return std::sqrt(num) / std::max(norm(b), 1e-300);
}

RTensor binary_mask(Rng &rng, std::size_t h, std::size_t w, double rate)
{
  RTensor m(Shape{h, w});
  for (auto &v : m.values()) {
    v = rng.uniform() < rate ? 1.0 : 0.0;
  }
  // Keep the center so the problem resembles a calibrated acquisition.
  for (std::size_t y = h / 2 - 2; y < h / 2 + 2; ++y) {
    for (std::size_t x = w / 2 - 2; x < w / 2 + 2; ++x) {
      m(y, x) = 1.0;
    }
  }
  return m;
}

KSpaceSample phantom_sample(std::uint64_t seed, std::size_t n, std::size_t coils)
{
  Rng rng(seed);
  CTensor const img = simulate_phantom(rng, n, n);
  CTensor const sens = simulate_coils(rng, n, n, coils);
  return make_sample(img, sens, 0.0, rng);
}

} // namespace

TEST_CASE("Zero-filled reconstruction", "[classical]")
{
  KSpaceSample const s = phantom_sample(1, 16, 3);
  CHECK(rel_diff(zero_filled(s.kspace, s.sens, RTensor(Shape{16, 16}, 1.0)), s.label) < 1e-12);
  CHECK(norm(zero_filled(s.kspace, s.sens, RTensor(Shape{16, 16}, 0.0))) == 0.0);
  CHECK_THROWS_AS(zero_filled(s.kspace, s.sens, RTensor(Shape{8, 16}, 1.0)), ShapeError);
}

TEST_CASE("Discrete gradient and divergence", "[classical]")
{
  Rng rng(2);
  auto const [cx, cy] = grad2d(CTensor(Shape{7, 9}, Cx(3.0, -1.0)));
  CHECK(norm(cx) == 0.0);
  CHECK(norm(cy) == 0.0);

  for (int rep = 0; rep < 50; ++rep) {
    CTensor const x = randc(rng, {7, 9});
    CTensor const px = randc(rng, {7, 9}), py = randc(rng, {7, 9});
    auto const [gx, gy] = grad2d(x);
    Cx const lhs = inner(gx, px) + inner(gy, py);
    Cx const rhs = inner(x, div2d(px, py));
    REQUIRE(std::abs(lhs + rhs) < 1e-10 * norm(x) * std::hypot(norm(px), norm(py)));
  }

  LinearOp const g = [](CTensor const &x) {
    auto const [gx, gy] = grad2d(x);
    CTensor out(Shape{2, x.dim(0), x.dim(1)});
    std::copy(gx.values().begin(), gx.values().end(), out.data());
    std::copy(gy.values().begin(), gy.values().end(), out.data() + x.size());
    return out;
  };
  LinearOp const gt = [](CTensor const &p) {
    std::size_t const h = p.dim(1), w = p.dim(2);
    CTensor px(Shape{h, w}), py(Shape{h, w});
    std::copy_n(p.data(), h * w, px.data());
    std::copy_n(p.data() + h * w, h * w, py.data());
    CTensor d = div2d(px, py);
    for (auto &v : d.values()) {
      v = -v;
    }
    return d;
  };
  double const l = power_method_opnorm(g, gt, {32, 32}, 500);
  CHECK(l <= std::sqrt(8.0));
  CHECK(l > 2.5);
}

TEST_CASE("Power method", "[classical]")
{
  LinearOp const id = [](CTensor const &x) { return x; };
  LinearOp const twice = [](CTensor const &x) {
    CTensor y = x;
    for (auto &v : y.values()) {
      v *= 2.0;
    }
    return y;
  };
  LinearOp const zero = [](CTensor const &x) { return CTensor(x.shape()); };
  CHECK(power_method_opnorm(id, id, {8, 8}) == Approx(1.0).margin(1e-9));
  CHECK(power_method_opnorm(twice, twice, {8, 8}) == Approx(2.0).margin(1e-9));
  CHECK(power_method_opnorm(zero, zero, {8, 8}) == 0.0);
}

TEST_CASE("Stacked operator norm matches a dense SVD", "[classical]")
{
  std::size_t const n = 8, np = n * n, nc = 2;
  KSpaceSample const s = phantom_sample(3, 16, nc);
  Rng rng(3);
  CTensor const sens = simulate_coils(rng, n, n, nc);
  RTensor const mask = binary_mask(rng, n, n, 0.3);

  LinearOp const op = [&](CTensor const &x) {
    CTensor const ax = sense_forward(x, sens, mask);
    auto const [gx, gy] = grad2d(x);
    CTensor out(Shape{nc + 2, n, n});
    std::copy(ax.values().begin(), ax.values().end(), out.data());
    std::copy(gx.values().begin(), gx.values().end(), out.data() + nc * np);
    std::copy(gy.values().begin(), gy.values().end(), out.data() + (nc + 1) * np);
    return out;
  };
  LinearOp const adj = [&](CTensor const &y) {
    CTensor a(Shape{nc, n, n}), px(Shape{n, n}), py(Shape{n, n});
    std::copy_n(y.data(), nc * np, a.data());
    std::copy_n(y.data() + nc * np, np, px.data());
    std::copy_n(y.data() + (nc + 1) * np, np, py.data());
    CTensor out = sense_adjoint(a, sens, mask);
    CTensor const d = div2d(px, py);
    for (std::size_t i = 0; i < np; ++i) {
      out[i] -= d[i];
    }
    return out;
  };

  Eigen::MatrixXcd K(long((nc + 2) * np), long(np));
  for (std::size_t j = 0; j < np; ++j) {
    CTensor e(Shape{n, n});
    e[j] = 1.0;
    CTensor const col = op(e);
    for (std::size_t i = 0; i < col.size(); ++i) {
      K(long(i), long(j)) = col[i];
    }
  }
  double const sv = Eigen::JacobiSVD<Eigen::MatrixXcd>(K).singularValues()(0);
  CHECK(power_method_opnorm(op, adj, {n, n}, 2000) == Approx(sv).epsilon(1e-4));
  (void)s;
}

TEST_CASE("TV reconstruction limits", "[classical][tv]")
{
  KSpaceSample const s = phantom_sample(4, 32, 4);
  SECTION("no regularization on a full mask recovers the label")
  {
    TVConfig cfg;
    cfg.alpha = 0;
    cfg.iters = 200;
    auto const r = tv_recon(s.kspace, s.sens, RTensor(Shape{32, 32}, 1.0), cfg);
    CHECK(rel_diff(r.image, s.label) < 1e-4);
  }
  SECTION("dominant regularization flattens the image")
  {
    Rng rng(4);
    TVConfig cfg;
    cfg.alpha = 1e3;
    // The primal-dual gap closes as O(1/n) from a dual radius of 1e3.
    cfg.iters = 2000;
    auto const r = tv_recon(s.kspace, s.sens, binary_mask(rng, 32, 32, 0.1), cfg);
    CHECK(tv_iso(r.image) / (32 * 32) < 1e-3);
  }
  SECTION("step sizes violating the bound are rejected")
  {
    TVConfig cfg;
    cfg.tau = 1.0;
    cfg.sigma = 1.0;
    CHECK_THROWS_AS(tv_recon(s.kspace, s.sens, RTensor(Shape{32, 32}, 1.0), cfg), NumericError);
  }
}

TEST_CASE("TV reconstruction on a 10% mask", "[classical][tv]")
{
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    KSpaceSample const s = phantom_sample(seed, 32, 4);
    Rng rng(seed);
    RTensor const mask = binary_mask(rng, 32, 32, 0.1);
    TVConfig cfg;
    auto const r = tv_recon(s.kspace, s.sens, mask, cfg);
    CTensor const zf = zero_filled(s.kspace, s.sens, mask);
    INFO("seed " << seed);

    REQUIRE(r.objective.size() == cfg.iters);
    for (std::size_t k = 11; k < r.objective.size(); ++k) {
      CHECK(r.objective[k] <= r.objective[k - 1] * (1 + 1e-12));
    }
    double const f_out = tv_objective(r.image, s.kspace, s.sens, mask, cfg.alpha);
    CHECK(f_out <= tv_objective(zf, s.kspace, s.sens, mask, cfg.alpha));
    CHECK(std::isfinite(tv_iso(r.image)));
    CHECK(tv_objective(r.image, s.kspace, s.sens, mask, 0) < tv_objective(zf, s.kspace, s.sens, mask, 0));
    CHECK(psnr(zf, s.label) < psnr(r.image, s.label));
  }
}

TEST_CASE("TV reconstruction is phase equivariant", "[classical][tv]")
{
  KSpaceSample const s = phantom_sample(8, 16, 2);
  Rng rng(8);
  RTensor const mask = binary_mask(rng, 16, 16, 0.3);
  TVConfig cfg;
  cfg.iters = 100;
  CTensor const x = tv_recon(s.kspace, s.sens, mask, cfg).image;

  Cx const rot = std::polar(1.0, 0.7);
  CTensor b = s.kspace, sens = s.sens;
  for (auto &v : b.values()) {
    v *= rot;
  }
  for (auto &v : sens.values()) {
    v *= rot;
  }
  CHECK(rel_diff(tv_recon(b, sens, mask, cfg).image, x) < 1e-8);

  CTensor xr = x;
  for (auto &v : xr.values()) {
    v *= rot;
  }
  CHECK(rel_diff(tv_recon(b, s.sens, mask, cfg).image, xr) < 1e-8);
}
