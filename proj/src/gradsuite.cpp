#include "loupe/gradsuite.hpp"
#include "loupe/mri.hpp"
#include "loupe/sampling.hpp"
#include "loupe/unrolled.hpp"

#include <cmath>
#include <memory>

namespace loupe {

using namespace ad;

SuiteGroup suite_group_from_string(std::string const &s)
{
  if (s == "all") {
    return SuiteGroup::All;
  }
  if (s == "ops") {
    return SuiteGroup::Ops;
  }
  if (s == "denoiser") {
    return SuiteGroup::Denoiser;
  }
  if (s == "pipeline") {
    return SuiteGroup::Pipeline;
  }
  throw ConfigError("unknown gradcheck suite '" + s + "' (all, ops, denoiser, pipeline)");
}

namespace {

// Random values with magnitude in [0.1, 1] and random sign, away from kinks.
RTensor away_from_zero(Rng &rng, Shape const &shape)
{
  RTensor t(shape);
  for (auto &v : t.values()) {
    double const m = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

RTensor uniform_in(Rng &rng, Shape const &shape, double lo, double hi)
{
  RTensor t(shape);
  for (auto &v : t.values()) {
    v = rng.uniform(lo, hi);
  }
  return t;
}

// Scalar loss from a tensor output: <out, fixed random weights>.
Var project(Var out, std::uint64_t seed)
{
  Rng rng(seed);
  return dot(out, out.tape().constant(uniform_in(rng, out.shape(), -1, 1)));
}

struct Runner
{
  std::uint64_t seed;
  std::vector<SuiteResult> results;
  GradcheckOptions opts;

  void check(std::string name, std::string group, double threshold, Program const &f, ParamStore const &params)
  {
    opts.seed = seed;
    auto report = gradcheck(f, params, opts);
    results.push_back({std::move(name), std::move(group), report.max_rel_err, threshold, report});
  }
};

void op_suites(Runner &run)
{
  // Single ops are smooth at the sampled points, so they use the usual
  // optimal central-difference step for double precision.
  run.opts = {};
  run.opts.eps = 1e-5;
  Rng rng(run.seed);
  double const tol = 1e-7;
  auto store = [](std::initializer_list<std::pair<char const *, RTensor>> items) {
    ParamStore s;
    for (auto const &[n, v] : items) {
      s.add(n, v);
    }
    return s;
  };
  Shape const s34{3, 4};

  {
    // x^T A x with A the (constant) 3x3 convolution operator.
    RTensor const k = uniform_in(rng, {1, 1, 3, 3}, -1, 1);
    run.check("quadratic", "op", 1e-8,
              [k](Tape &t, ParamVars const &p) { return dot(p["x"], conv2d(p["x"], t.constant(k))); },
              store({{"x", uniform_in(rng, {1, 5, 5}, -1, 1)}}));
  }
  run.check("add", "op", tol, [](Tape &, ParamVars const &p) { return project(add(p["a"], p["b"]), 1); },
            store({{"a", uniform_in(rng, s34, -1, 1)}, {"b", uniform_in(rng, s34, -1, 1)}}));
  run.check("sub", "op", tol, [](Tape &, ParamVars const &p) { return project(sub(p["a"], p["b"]), 2); },
            store({{"a", uniform_in(rng, s34, -1, 1)}, {"b", uniform_in(rng, s34, -1, 1)}}));
  run.check("mul", "op", tol, [](Tape &, ParamVars const &p) { return project(mul(p["a"], p["b"]), 3); },
            store({{"a", uniform_in(rng, s34, -1, 1)}, {"b", uniform_in(rng, s34, -1, 1)}}));
  run.check("scale", "op", tol, [](Tape &, ParamVars const &p) { return project(scale(p["a"], 1.7), 4); },
            store({{"a", uniform_in(rng, s34, -1, 1)}}));
  run.check("scale_by", "op", tol, [](Tape &, ParamVars const &p) { return project(scale_by(p["s"], p["a"]), 5); },
            store({{"s", RTensor(Shape{}, 0.8)}, {"a", uniform_in(rng, s34, -1, 1)}}));
  run.check("exp", "op", tol, [](Tape &, ParamVars const &p) { return project(exp(p["a"]), 6); },
            store({{"a", uniform_in(rng, s34, -1, 1)}}));
  run.check("relu", "op", tol, [](Tape &, ParamVars const &p) { return project(relu(p["a"]), 7); },
            store({{"a", away_from_zero(rng, s34)}}));
  run.check("sigmoid", "op", tol, [](Tape &, ParamVars const &p) { return project(sigmoid(p["a"]), 8); },
            store({{"a", uniform_in(rng, s34, -3, 3)}}));
  run.check("abs_sum", "op", tol, [](Tape &, ParamVars const &p) { return abs_sum(p["a"]); },
            store({{"a", away_from_zero(rng, s34)}}));
  run.check("sum", "op", tol, [](Tape &, ParamVars const &p) { return sum(mul(p["a"], p["a"])); },
            store({{"a", uniform_in(rng, s34, -1, 1)}}));
  run.check("sum_leading", "op", tol, [](Tape &, ParamVars const &p) { return project(sum_leading(p["a"]), 9); },
            store({{"a", uniform_in(rng, {3, 4, 2}, -1, 1)}}));
  run.check("dot", "op", tol, [](Tape &, ParamVars const &p) { return dot(p["a"], p["b"]); },
            store({{"a", uniform_in(rng, s34, -1, 1)}, {"b", uniform_in(rng, s34, -1, 1)}}));
  run.check("div", "op", tol, [](Tape &, ParamVars const &p) { return div(p["a"], p["b"]); },
            store({{"a", RTensor(Shape{}, 0.7)}, {"b", RTensor(Shape{}, -1.3)}}));
  run.check("conv2d", "op", tol, [](Tape &, ParamVars const &p) { return project(conv2d(p["x"], p["w"]), 10); },
            store({{"x", uniform_in(rng, {2, 6, 5}, -1, 1)}, {"w", uniform_in(rng, {3, 2, 3, 3}, -1, 1)}}));
  run.check("instance_norm", "op", tol,
            [](Tape &, ParamVars const &p) { return project(instance_norm(p["x"], p["g"], p["b"]), 11); },
            store({{"x", uniform_in(rng, {3, 5, 4}, -1, 1)},
                   {"g", uniform_in(rng, {3}, 0.5, 1.5)},
                   {"b", uniform_in(rng, {3}, -1, 1)}}));
  run.check("cmul", "op", tol, [](Tape &, ParamVars const &p) { return project(cmul(p["a"], p["b"]), 12); },
            store({{"a", uniform_in(rng, {3, 4, 5, 2}, -1, 1)}, {"b", uniform_in(rng, {4, 5, 2}, -1, 1)}}));
  run.check("cmul_conj", "op", tol,
            [](Tape &, ParamVars const &p) { return project(cmul_conj(p["a"], p["b"]), 13); },
            store({{"a", uniform_in(rng, {4, 5, 2}, -1, 1)}, {"b", uniform_in(rng, {3, 4, 5, 2}, -1, 1)}}));
  run.check("fft2c", "op", tol, [](Tape &, ParamVars const &p) { return project(fft2c(p["a"]), 14); },
            store({{"a", uniform_in(rng, {2, 5, 6, 2}, -1, 1)}}));
  run.check("ifft2c", "op", tol, [](Tape &, ParamVars const &p) { return project(ifft2c(p["a"]), 15); },
            store({{"a", uniform_in(rng, {2, 6, 5, 2}, -1, 1)}}));
  run.check("mask_mul", "op", tol, [](Tape &, ParamVars const &p) { return project(mask_mul(p["m"], p["a"]), 16); },
            store({{"m", uniform_in(rng, {4, 5}, 0, 1)}, {"a", uniform_in(rng, {2, 4, 5, 2}, -1, 1)}}));
  run.check("concat", "op", tol, [](Tape &, ParamVars const &p) { return project(concat({p["a"], p["b"]}), 17); },
            store({{"a", uniform_in(rng, {2, 3}, -1, 1)}, {"b", uniform_in(rng, {1, 3}, -1, 1)}}));
  run.check("split", "op", tol, [](Tape &, ParamVars const &p) { return project(split(p["a"], 1, 2), 18); },
            store({{"a", uniform_in(rng, {4, 3}, -1, 1)}}));
  run.check("to_planar", "op", tol, [](Tape &, ParamVars const &p) { return project(to_planar(p["a"]), 19); },
            store({{"a", uniform_in(rng, {3, 4, 2}, -1, 1)}}));
  run.check("to_interleaved", "op", tol,
            [](Tape &, ParamVars const &p) { return project(to_interleaved(p["a"]), 20); },
            store({{"a", uniform_in(rng, {2, 3, 4}, -1, 1)}}));
  {
    RTensor const offset = uniform_in(rng, s34, -1, 1);
    run.check("straight_through", "op", tol,
              [offset](Tape &, ParamVars const &p) {
                Var a = p["a"];
                RTensor hard = a.value();
                for (std::size_t i = 0; i < hard.size(); ++i) {
                  hard[i] += offset[i];
                }
                return project(straight_through(a, hard), 21);
              },
              store({{"a", uniform_in(rng, s34, -1, 1)}}));
  }
  run.check("probability_map", "op", tol,
            [](Tape &, ParamVars const &p) { return project(ad::probability_map(p["w"], 0.25), 22); },
            store({{"w", uniform_in(rng, {6, 6}, -4, 4)}}));
  {
    RTensor const calib = centered_calibration(8, 8, 2);
    // Mean of P well above and well below the target select the two branches.
    run.check("renormalize_scale", "op", tol,
              [calib](Tape &, ParamVars const &p) { return project(ad::renormalize(p["p"], 0.25, calib), 23); },
              store({{"p", uniform_in(rng, {8, 8}, 0.3, 0.9)}}));
    run.check("renormalize_flip", "op", tol,
              [calib](Tape &, ParamVars const &p) { return project(ad::renormalize(p["p"], 0.25, calib), 24); },
              store({{"p", uniform_in(rng, {8, 8}, 0.01, 0.1)}}));
  }
  {
    RTensor const z = uniform_in(rng, {5, 5}, 0, 1);
    run.check("sample_approx", "op", tol,
              [z](Tape &, ParamVars const &p) { return project(ad::sample_approx(p["p"], z, 12.0), 25); },
              store({{"p", uniform_in(rng, {5, 5}, 0, 1)}}));
  }
  {
    Rng data = Rng::derive(run.seed, 100);
    auto sens = std::make_shared<CTensor const>(simulate_coils(data, 8, 8, 2));
    run.check("cg_solve", "op", tol,
              [sens](Tape &, ParamVars const &p) { return project(cg_solve(p["rhs"], p["m"], p["lam"], sens, 5), 26); },
              store({{"rhs", uniform_in(rng, {8, 8, 2}, -1, 1)},
                     {"m", uniform_in(rng, {8, 8}, 0.2, 1)},
                     {"lam", RTensor(Shape{}, 0.5)}}));
    run.check("sense_forward", "op", tol,
              [sens](Tape &t, ParamVars const &p) {
                return project(sense_forward(p["x"], t.constant(to_real_pairs(*sens)), p["m"]), 27);
              },
              store({{"x", uniform_in(rng, {8, 8, 2}, -1, 1)}, {"m", uniform_in(rng, {8, 8}, 0, 1)}}));
    run.check("sense_adjoint", "op", tol,
              [sens](Tape &t, ParamVars const &p) {
                return project(sense_adjoint(p["y"], t.constant(to_real_pairs(*sens)), p["m"]), 28);
              },
              store({{"y", uniform_in(rng, {2, 8, 8, 2}, -1, 1)}, {"m", uniform_in(rng, {8, 8}, 0, 1)}}));
  }
}

void denoiser_suite(Runner &run)
{
  run.opts = {};
  Rng rng = Rng::derive(run.seed, 200);
  ParamStore params;
  init_denoiser(params, 4, rng);
  // Perturb the affine terms away from their (1, 0) initialization.
  for (auto &[name, value] : params.entries()) {
    if (name.find("norm") != std::string::npos) {
      for (auto &v : value.values()) {
        v += rng.uniform(-0.3, 0.3);
      }
    }
  }
  RTensor const x = uniform_in(rng, {8, 8, 2}, -1, 1);
  RTensor const target = uniform_in(rng, {8, 8, 2}, -1, 1);
  run.check("denoiser", "denoiser", 1e-5,
            [x, target](Tape &t, ParamVars const &p) { return abs_sum(sub(denoise(t.constant(x), p), t.constant(target))); },
            params);
}

void pipeline_suite(Runner &run, SamplingMode mode)
{
  std::size_t const n = 16, nc = 2;
  Rng data = Rng::derive(run.seed, 300);
  CTensor const image = simulate_phantom(data, n, n);
  auto const sens = std::make_shared<CTensor const>(simulate_coils(data, n, n, nc));
  KSpaceSample const sample = make_sample(image, *sens, 0.0, data);

  ParamStore params;
  Rng init = Rng::derive(run.seed, 301);
  init_denoiser(params, 8, init);
  params.add(param::kRho, RTensor(Shape{}, 0.1));
  params.add(param::kLogits, uniform_in(init, {n, n}, -1, 1));

  PatternParams pp;
  pp.logits = params.at(param::kLogits);
  pp.slope = 0.25;
  pp.ratio = 0.25;
  pp.calib = centered_calibration(n, n, 4);
  RTensor const z = uniform_in(init, {n, n}, 0, 1);
  RTensor const prob_ref = renormalize(probability_map(pp.logits, pp.slope), pp.ratio, pp.calib);
  RTensor const hard_ref = threshold(prob_ref, z);
  UnrollConfig ucfg;
  ucfg.blocks = 2;
  ucfg.cg_iters = 5;

  Program f = [=](Tape &t, ParamVars const &p) {
    Var mask;
    if (mode == SamplingMode::Binary) {
      // The draw is frozen at the reference parameters; the forward value moves
      // with P' around it so central differences see the straight-through path.
      Var prob = ad::renormalize(ad::probability_map(p[param::kLogits], pp.slope), pp.ratio, pp.calib);
      RTensor hard = hard_ref;
      for (std::size_t i = 0; i < hard.size(); ++i) {
        hard[i] += prob.value()[i] - prob_ref[i];
      }
      mask = straight_through(prob, std::move(hard));
    } else {
      mask = pattern_mask(p[param::kLogits], pp, SamplingMode::Approx, z, 12.0);
    }
    auto out = modl_forward(t, sample.kspace, sens, mask, p, ucfg);
    return training_loss(out.blocks, sample.label);
  };
  // The loss is only weakly sensitive to single logits, so their central
  // differences at 1e-6 sit at the rounding floor of the loss value; the
  // network leaves keep the small step because of ReLU and L1 kinks.
  run.opts = {};
  run.opts.leaf_eps[param::kLogits] = 1e-5;
  run.check(mode == SamplingMode::Binary ? "pipeline_bs" : "pipeline_as", "pipeline", 1e-4, f, params);
}

} // namespace

std::vector<SuiteResult> run_gradcheck_suites(SuiteGroup group, std::uint64_t seed)
{
  Runner run{seed, {}, {}};
  if (group == SuiteGroup::All || group == SuiteGroup::Ops) {
    op_suites(run);
  }
  if (group == SuiteGroup::All || group == SuiteGroup::Denoiser) {
    denoiser_suite(run);
  }
  if (group == SuiteGroup::All || group == SuiteGroup::Pipeline) {
    pipeline_suite(run, SamplingMode::Binary);
    pipeline_suite(run, SamplingMode::Approx);
  }
  return run.results;
}

} // namespace loupe
