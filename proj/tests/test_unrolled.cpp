#include "loupe/gradsuite.hpp"
#include "loupe/mri.hpp"
#include "loupe/trainer.hpp"
#include "loupe/unrolled.hpp"

#include <Eigen/Dense>
#include <catch_amalgamated.hpp>

#include <cmath>
#include <memory>

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
  return m;
}

ad::ParamStore zero_params(std::size_t channels)
{
  TrainConfig cfg;
  cfg.channels = channels;
  ad::ParamStore p = init_params(cfg, 16, 16, 3);
  for (auto &[name, t] : p.entries()) {
    std::fill(t.storage().begin(), t.storage().end(), 0.0);
  }
  return p;
}

} // namespace

TEST_CASE("Denoiser", "[unrolled]")
{
  Rng rng(1);
  SECTION("zero branch gives the identity")
  {
    ad::ParamStore p;
    init_denoiser(p, 8, rng);
    for (auto &[name, t] : p.entries()) {
      if (name.find("weight") != std::string::npos || name.find("scale") != std::string::npos) {
        std::fill(t.storage().begin(), t.storage().end(), 0.0);
      }
    }
    CTensor const x = randc(rng, {9, 7});
    CHECK(denoise(x, p) == x);
  }
  SECTION("shape is preserved")
  {
    ad::ParamStore p;
    init_denoiser(p, 4, rng);
    CHECK(denoiser_channels(p) == 4);
    for (std::size_t h : {3, 5, 16}) {
      CTensor const x = randc(rng, {h, h + 1});
      CHECK(denoise(x, p).shape() == x.shape());
    }
  }
}

TEST_CASE("Data consistency limits", "[unrolled][cg]")
{
  Rng rng(2);
  SECTION("large lambda returns z")
  {
    CTensor const sens = simulate_coils(rng, 16, 16, 4);
    RTensor const mask = binary_mask(rng, 16, 16, 0.3);
    CTensor const z = randc(rng, {16, 16});
    CTensor const b = randc(rng, {4, 16, 16});
    CHECK(rel_diff(data_consistency(z, b, sens, mask, 1e8, 10), z) < 1e-6);
  }
  SECTION("tiny lambda inverts a unitary A")
  {
    CTensor const sens(Shape{1, 16, 16}, Cx(1.0));
    RTensor const mask(Shape{16, 16}, 1.0);
    CTensor const z = randc(rng, {16, 16});
    CTensor const b = randc(rng, {1, 16, 16});
    CTensor b2 = b;
    b2.reshape({16, 16});
    CHECK(rel_diff(data_consistency(z, b, sens, mask, 1e-12, 10), ifft2c(b2)) < 1e-10);
  }
  SECTION("invalid arguments")
  {
    CTensor const sens = simulate_coils(rng, 8, 8, 2);
    RTensor const mask(Shape{8, 8}, 1.0);
    CHECK_THROWS(data_consistency(CTensor(Shape{8, 8}), CTensor(Shape{2, 8, 8}), sens, mask, 0.0, 5));
    CHECK_THROWS(data_consistency(CTensor(Shape{8, 8}), CTensor(Shape{2, 8, 8}), sens, mask, -1.0, 5));
    CHECK_THROWS_AS(data_consistency(CTensor(Shape{8, 4}), CTensor(Shape{2, 8, 8}), sens, mask, 1.0, 5),
                    ShapeError);
  }
}

TEST_CASE("Data consistency matches a dense direct solve", "[unrolled][cg]")
{
  std::size_t const h = 8, w = 8, n = h * w;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    CTensor const sens = simulate_coils(rng, h, w, 1);
    RTensor const mask = seed % 2 ? binary_mask(rng, h, w, 0.4) : uniform(rng, {h, w});
    double const lambda = rng.uniform(0.01, 1.0);
    CTensor const z = randc(rng, {h, w});
    CTensor const b = randc(rng, {1, h, w});

    // Dense B = F diag(S) built column by column; the mask enters once:
    // (B^H M B + lambda I) x = B^H M b + lambda z.
    Eigen::MatrixXcd B(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      CTensor e(Shape{h, w});
      e[j] = sens[j];
      CTensor const col = fft2c(e);
      for (std::size_t i = 0; i < n; ++i) {
        B(long(i), long(j)) = col[i];
      }
    }
    Eigen::VectorXd const m = Eigen::Map<Eigen::VectorXd const>(mask.data(), long(n));
    Eigen::Map<Eigen::VectorXcd const> be(b.data(), long(n)), ze(z.data(), long(n));
    Eigen::MatrixXcd const N =
      B.adjoint() * m.asDiagonal() * B + lambda * Eigen::MatrixXcd::Identity(long(n), long(n));
    Eigen::VectorXcd const x = N.partialPivLu().solve(B.adjoint() * m.asDiagonal() * be + lambda * ze);

    CTensor const out = data_consistency(z, b, sens, mask, lambda, 64);
    CTensor oracle(Shape{h, w});
    for (std::size_t i = 0; i < n; ++i) {
      oracle[i] = x(long(i));
    }
    INFO("seed " << seed);
    CHECK(rel_diff(out, oracle) < 1e-6);
  }
}

TEST_CASE("CG residual decreases monotonically", "[unrolled][cg]")
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    CTensor const sens = simulate_coils(rng, 16, 16, 4);
    RTensor const mask = binary_mask(rng, 16, 16, 0.2);
    CTensor const rhs = randc(rng, {16, 16});
    std::vector<double> res;
    cg_solve(rhs, sens, mask, 0.5, 30, &res);
    REQUIRE(res.size() == 31);
    CHECK(res[0] == Approx(1.0));
    // Below 1e-13 the residual sits at the rounding floor.
    for (std::size_t k = 1; k < res.size() && res[k - 1] > 1e-13; ++k) {
      INFO("seed " << seed << " iteration " << k);
      CHECK(res[k] <= res[k - 1]);
    }
    CHECK(res.back() < 1e-8);
  }
}

TEST_CASE("Data consistency is jointly linear in (b, z)", "[unrolled][cg]")
{
  // A truncated Krylov solve depends nonlinearly on its rhs, so the solves run to convergence.
  std::size_t const n_cg = 60;
  Rng rng(5);
  CTensor const sens = simulate_coils(rng, 16, 16, 3);
  RTensor const mask = uniform(rng, {16, 16});
  CTensor const b1 = randc(rng, {3, 16, 16}), b2 = randc(rng, {3, 16, 16});
  CTensor const z1 = randc(rng, {16, 16}), z2 = randc(rng, {16, 16});
  double const alpha = 0.7, beta = -1.3;
  CTensor bm = b1, zm = z1;
  for (std::size_t i = 0; i < bm.size(); ++i) {
    bm[i] = alpha * b1[i] + beta * b2[i];
  }
  for (std::size_t i = 0; i < zm.size(); ++i) {
    zm[i] = alpha * z1[i] + beta * z2[i];
  }
  CTensor const f1 = data_consistency(z1, b1, sens, mask, 0.3, n_cg);
  CTensor const f2 = data_consistency(z2, b2, sens, mask, 0.3, n_cg);
  CTensor comb = f1;
  for (std::size_t i = 0; i < comb.size(); ++i) {
    comb[i] = alpha * f1[i] + beta * f2[i];
  }
  CHECK(rel_diff(data_consistency(zm, bm, sens, mask, 0.3, n_cg), comb) < 1e-9);
}

TEST_CASE("Unrolled forward", "[unrolled]")
{
  Rng rng(6);
  CTensor const img = simulate_phantom(rng, 16, 16);
  CTensor const sens = simulate_coils(rng, 16, 16, 2);
  KSpaceSample const s = make_sample(img, sens, 0.0, rng);
  RTensor const mask = binary_mask(rng, 16, 16, 0.3);
  CTensor const x0 = sense_adjoint(s.kspace, s.sens, mask);

  SECTION("identity denoiser and dominant lambda stay at the zero-filled input")
  {
    ad::ParamStore p = zero_params(4);
    p.at(param::kRho)[0] = std::log(1e8);
    auto const xs = modl_reconstruct(s.kspace, s.sens, mask, p, {5, 10});
    REQUIRE(xs.size() == 5);
    for (auto const &x : xs) {
      CHECK(rel_diff(x, x0) < 1e-5);
    }
  }
  SECTION("one block is denoise then data consistency")
  {
    TrainConfig cfg;
    cfg.channels = 4;
    ad::ParamStore const p = init_params(cfg, 16, 16, 9);
    double const lambda = std::exp(p.at(param::kRho)[0]);
    auto const xs = modl_reconstruct(s.kspace, s.sens, mask, p, {1, 7});
    REQUIRE(xs.size() == 1);
    CTensor const ref = data_consistency(denoise(x0, p), s.kspace, s.sens, mask, lambda, 7);
    CHECK(rel_diff(xs[0], ref) < 1e-12);
  }
  SECTION("a binary mask and the same values on a differentiable path agree")
  {
    TrainConfig cfg;
    cfg.channels = 4;
    ad::ParamStore const p = init_params(cfg, 16, 16, 9);
    UnrollConfig const u{3, 6};
    auto const plain = modl_reconstruct(s.kspace, s.sens, mask, p, u);
    ad::Tape tape;
    ad::ParamVars pv(tape, p);
    auto const shared = std::make_shared<CTensor const>(s.sens);
    auto const out = ad::modl_forward(tape, s.kspace, shared, tape.leaf(mask), pv, u);
    REQUIRE(out.blocks.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(from_real_pairs(out.blocks[k].value()) == plain[k]);
    }
    CHECK(from_real_pairs(out.zero_filled.value()) == x0);
  }
  SECTION("invalid unroll configs")
  {
    CHECK_THROWS_AS((UnrollConfig{0, 10}.validate()), ConfigError);
    CHECK_THROWS_AS((UnrollConfig{5, 0}.validate()), ConfigError);
  }
}

TEST_CASE("Training loss", "[unrolled]")
{
  Rng rng(7);
  CTensor const label = randc(rng, {6, 6});
  ad::Tape tape;
  ad::Var same = tape.constant(to_real_pairs(label));
  CHECK(ad::training_loss({same, same, same}, label).value()[0] == 0.0);

  CTensor off = label;
  off(2, 3) += Cx(1.0, 0.0);
  CHECK(ad::training_loss({tape.constant(to_real_pairs(off))}, label).value()[0] == Approx(1.0).epsilon(1e-15));

  CTensor both = label;
  both(0, 0) += Cx(0.5, -0.25);
  CHECK(ad::training_loss({tape.constant(to_real_pairs(both))}, label).value()[0] == Approx(0.75).epsilon(1e-15));

  for (int rep = 0; rep < 20; ++rep) {
    ad::Var r = tape.constant(to_real_pairs(randc(rng, {6, 6})));
    CHECK(ad::training_loss({r, r}, label).value()[0] >= 0.0);
  }
}

TEST_CASE("Full pipeline and denoiser gradchecks", "[unrolled][gradcheck]")
{
  auto results = run_gradcheck_suites(SuiteGroup::Denoiser, 7);
  auto const pipe = run_gradcheck_suites(SuiteGroup::Pipeline, 7);
  results.insert(results.end(), pipe.begin(), pipe.end());
  CHECK(results.size() == 3);
  for (auto const &r : results) {
    INFO(r.name << " err " << r.max_rel_err << " leaf " << r.report.worst_leaf);
    CHECK(r.passed());
  }
}
