// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
//
// Usage: acceptance [work_dir] [path/to/kspace-loupe]

#include "loupe/classical.hpp"
#include "loupe/evaluate.hpp"
#include "loupe/gradsuite.hpp"
#include "loupe/metrics.hpp"
#include "loupe/mri.hpp"
#include "loupe/sampling.hpp"
#include "loupe/tensor_io.hpp"
#include "loupe/trainer.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>

using namespace loupe;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr double kOperatorTol = 1e-10;
constexpr double kOperatorSeconds = 30;
// Criterion 2
constexpr double kOpGradTol = 1e-7;
constexpr double kQuadraticGradTol = 1e-8;
constexpr double kDenoiserGradTol = 1e-5;
constexpr double kPipelineGradTol = 1e-4;
constexpr double kGradSeconds = 300;
// Criterion 3
constexpr double kCgOracleTol = 1e-6;
constexpr std::size_t kCgOracleIters = 64;
constexpr double kCgResidualFloor = 1e-13;
constexpr double kCgSeconds = 10;
// Criterion 4
constexpr double kRenormTol = 1e-10;
constexpr int kBernoulliDraws = 10000;
constexpr double kBernoulliSigmas = 3;
// Criterion 5
constexpr double kSteepSlope = 1e6;
constexpr double kSteepTol = 1e-6;
// Criterion 6
constexpr double kBsVsAsMargin = -0.1;
constexpr double kOverZeroFilled = 6.0;
constexpr double kPipelineSeconds = 15 * 60;
// Criterion 7
constexpr double kLearnedVsVdMargin = -0.1;
constexpr double kEvalSeconds = 10 * 60;
// Criterion 8
constexpr double kTvRecoveryTol = 1e-4;
// Criterion 10
constexpr double kMetricTol = 1e-12;

// Desk-scale toy problem: 64x64, 4 coils, 20/5/10 samples, gamma 0.1, K 5, C 16, 50 epochs.
RunConfig toy_config(fs::path const &root, SamplingMode mode)
{
  RunConfig cfg;
  cfg.data.out_dir = root / "data";
  cfg.train.mode = mode;
  cfg.train.lr = 1e-2;
  cfg.train.lr_pattern = 1e-1;
  cfg.train.manifest = (root / "data" / "manifest.json").string();
  cfg.train.checkpoint_dir = (root / (mode == SamplingMode::Binary ? "bs" : "as")).string();
  return cfg;
}

struct Outcome
{
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(char const *f, double a)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int failures = 0;

void criterion(int n, char const *title, std::function<Outcome()> const &body)
{
  auto const t0 = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (std::exception const &e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  failures += out.pass ? 0 : 1;
  std::printf("CRITERION %2d %-28s %s  (%s; %.1f s)\n", n, title, out.pass ? "PASS" : "FAIL",
              out.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

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

double mean(RTensor const &t)
{
  double s = 0;
  for (double v : t.values()) {
    s += v;
  }
  return s / double(t.size());
}

Outcome operators()
{
  auto const t0 = Clock::now();
  Rng rng(101);
  double worst_fft = 0, worst_sense = 0;
  for (std::size_t h : {8, 16, 32, 64}) {
    for (std::size_t w : {8, 16, 32, 64}) {
      for (int rep = 0; rep < 100; ++rep) {
        CTensor const x = randc(rng, {h, w}), y = randc(rng, {h, w});
        double const nx = norm(x), ny = norm(y);
        worst_fft = std::max(worst_fft, rel_diff(ifft2c(fft2c(x)), x));
        worst_fft = std::max(worst_fft, rel_diff(fft2c(ifft2c(x)), x));
        worst_fft = std::max(worst_fft, std::abs(inner(fft2c(x), y) - inner(x, ifft2c(y))) / (nx * ny));
      }
      for (std::size_t nc : {1, 2, 4}) {
        CTensor const sens = simulate_coils(rng, h, w, nc);
        for (int rep = 0; rep < 100; ++rep) {
          RTensor const mask = uniform(rng, {h, w});
          CTensor const x = randc(rng, {h, w}), y = randc(rng, {nc, h, w});
          Cx const lhs = inner(sense_forward(x, sens, mask), y);
          Cx const rhs = inner(x, sense_adjoint(y, sens, mask));
          worst_sense = std::max(worst_sense, std::abs(lhs - rhs) / (norm(x) * norm(y)));
        }
      }
    }
  }
  double const secs = seconds_since(t0);
  return {worst_fft < kOperatorTol && worst_sense < kOperatorTol && secs < kOperatorSeconds,
          "fft worst " + fmt("%.2e", worst_fft) + ", sense worst " + fmt("%.2e", worst_sense) + ", tol " +
            fmt("%.0e", kOperatorTol)};
}

Outcome gradients()
{
  auto const t0 = Clock::now();
  auto const results = run_gradcheck_suites(SuiteGroup::All, 7);
  double op = 0, quad = 0, den = 0, pipe = 0;
  bool pass = true;
  bool saw_bs = false, saw_as = false;
  for (auto const &r : results) {
    double tol = kOpGradTol;
    if (r.name == "quadratic") {
      tol = kQuadraticGradTol;
      quad = std::max(quad, r.max_rel_err);
    } else if (r.group == "denoiser") {
      tol = kDenoiserGradTol;
      den = std::max(den, r.max_rel_err);
    } else if (r.group == "pipeline") {
      tol = kPipelineGradTol;
      pipe = std::max(pipe, r.max_rel_err);
      saw_bs = saw_bs || r.name == "pipeline_bs";
      saw_as = saw_as || r.name == "pipeline_as";
    } else {
      op = std::max(op, r.max_rel_err);
    }
    if (!(r.max_rel_err < tol)) {
      pass = false;
      std::printf("    gradcheck %s: %.3e >= %.0e\n", r.name.c_str(), r.max_rel_err, tol);
    }
  }
  double const secs = seconds_since(t0);
  return {pass && saw_bs && saw_as && den > 0 && secs < kGradSeconds,
          std::to_string(results.size()) + " suites; ops " + fmt("%.2e", op) + ", quadratic " + fmt("%.2e", quad) +
            ", denoiser " + fmt("%.2e", den) + ", pipeline " + fmt("%.2e", pipe)};
}

Outcome cg_oracle()
{
  auto const t0 = Clock::now();
  std::size_t const n = 8, np = n * n;
  double worst = 0;
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    CTensor const sens = simulate_coils(rng, n, n, 1);
    RTensor mask = uniform(rng, {n, n});
    if (seed % 2) {
      for (auto &v : mask.values()) {
        v = v < 0.4 ? 1.0 : 0.0;
      }
    }
    double const lambda = rng.uniform(0.01, 1.0);
    CTensor const z = randc(rng, {n, n}), b = randc(rng, {1, n, n});

    Eigen::MatrixXcd B(np, np);
    for (std::size_t j = 0; j < np; ++j) {
      CTensor e(Shape{n, n});
      e[j] = sens[j];
      CTensor const col = fft2c(e);
      for (std::size_t i = 0; i < np; ++i) {
        B(long(i), long(j)) = col[i];
      }
    }
    Eigen::VectorXd const m = Eigen::Map<Eigen::VectorXd const>(mask.data(), long(np));
    Eigen::Map<Eigen::VectorXcd const> be(b.data(), long(np)), ze(z.data(), long(np));
    Eigen::MatrixXcd const N =
      B.adjoint() * m.asDiagonal() * B + lambda * Eigen::MatrixXcd::Identity(long(np), long(np));
    Eigen::VectorXcd const rhs = B.adjoint() * m.asDiagonal() * be + lambda * ze;
    Eigen::VectorXcd const x = N.partialPivLu().solve(rhs);
    CTensor oracle(Shape{n, n});
    for (std::size_t i = 0; i < np; ++i) {
      oracle[i] = x(long(i));
    }
    worst = std::max(worst, rel_diff(data_consistency(z, b, sens, mask, lambda, kCgOracleIters), oracle));

    CTensor crhs(Shape{n, n});
    for (std::size_t i = 0; i < np; ++i) {
      crhs[i] = rhs(long(i));
    }
    std::vector<double> res;
    cg_solve(crhs, sens, mask, lambda, kCgOracleIters, &res);
    for (std::size_t k = 1; k < res.size() && res[k - 1] > kCgResidualFloor; ++k) {
      monotone = monotone && res[k] <= res[k - 1];
    }
  }
  double const secs = seconds_since(t0);
  return {worst < kCgOracleTol && monotone && secs < kCgSeconds,
          "worst rel err " + fmt("%.2e", worst) + " at n_cg 64, residual " + (monotone ? "monotone" : "NOT monotone")};
}

Outcome sampling_stats()
{
  Rng rng(404);
  double worst_mean = 0;
  bool card = true, calib_ok = true;
  for (int rep = 0; rep < 100; ++rep) {
    std::size_t const h = 16 + 16 * std::size_t(rng.integer(0, 3)), w = 16 + 16 * std::size_t(rng.integer(0, 3));
    std::size_t const cs = std::size_t(rng.integer(0, 6));
    RTensor const calib = centered_calibration(h, w, cs);
    double const floor_ratio = double(count_ones(calib)) / double(h * w);
    double const gamma = rng.uniform(floor_ratio + 0.02, 0.9);
    RTensor logits(Shape{h, w});
    for (auto &v : logits.values()) {
      v = rng.uniform(-10, 10);
    }
    RTensor const p = renormalize(probability_map(logits, rng.uniform(0.05, 2)), gamma, calib);
    worst_mean = std::max(worst_mean, std::abs(mean(p) - gamma));
    RTensor const u = topk_pattern(p, gamma, calib);
    card = card && count_ones(u) == std::size_t(std::floor(gamma * double(h * w) + 1e-9));
    RTensor const d = sample_binary(p, rng);
    RTensor const v = vd_pattern(h, w, gamma, 4.0, calib, rng);
    for (std::size_t i = 0; i < calib.size(); ++i) {
      if (calib[i] == 1.0) {
        calib_ok = calib_ok && u[i] == 1.0 && d[i] == 1.0 && v[i] == 1.0;
      }
    }
  }

  RTensor const calib = centered_calibration(32, 32, 4);
  RTensor logits(Shape{32, 32});
  for (auto &v : logits.values()) {
    v = rng.uniform(-4, 4);
  }
  RTensor const p = renormalize(probability_map(logits, 0.25), 0.1, calib);
  double ones = 0, var = 0;
  bool binary = true;
  for (int d = 0; d < kBernoulliDraws; ++d) {
    RTensor const u = sample_binary(p, rng);
    for (double x : u.values()) {
      binary = binary && (x == 0.0 || x == 1.0);
    }
    ones += double(count_ones(u));
  }
  for (double x : p.values()) {
    var += x * (1 - x);
  }
  double const n = double(kBernoulliDraws) * double(p.size());
  double const ratio = ones / n;
  double const sigma = std::sqrt(var * kBernoulliDraws) / n;
  double const z = std::abs(ratio - 0.1) / sigma;

  return {worst_mean < kRenormTol && card && calib_ok && binary && z < kBernoulliSigmas,
          "renorm worst " + fmt("%.1e", worst_mean) + ", bernoulli " + fmt("%.5f", ratio) + " (" + fmt("%.2f", z) +
            " sigma), topk count " + (card ? "exact" : "WRONG") + ", calib " + (calib_ok ? "kept" : "LOST")};
}

Outcome st_mechanism(RunConfig const &cfg)
{
  auto const m = load_manifest(cfg.train.manifest);
  auto const sample = read_sample(m.split("train").front());
  std::size_t const h = sample.height(), w = sample.width();
  ad::ParamStore params = init_params(cfg.train, h, w, cfg.seeds.init);
  Rng zr = Rng::derive(cfg.seeds.sampling, 0);
  RTensor const z = uniform(zr, {h, w});
  auto const step = train_step_gradients(cfg.train, params, sample, z);
  bool binary = true;
  for (double v : step.mask.values()) {
    binary = binary && (v == 0.0 || v == 1.0);
  }
  RTensor const before = params.at(param::kLogits);
  AdamState st;
  adam_step(params, step.grads, st, cfg.train.lr_pattern);
  double moved = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    moved += std::pow(params.at(param::kLogits)[i] - before[i], 2);
  }
  moved = std::sqrt(moved);

  PatternParams const pp = pattern_params(cfg.train, init_params(cfg.train, h, w, cfg.seeds.init));
  ad::Tape tape;
  ad::Var wv = tape.leaf(pp.logits);
  RTensor const bs = ad::pattern_mask(wv, pp, SamplingMode::Binary, z, cfg.train.slope_b).value();
  RTensor const as = ad::pattern_mask(wv, pp, SamplingMode::Approx, z, kSteepSlope).value();
  double gap = 0;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    gap = std::max(gap, std::abs(as[i] - bs[i]));
  }
  return {moved > 0 && binary && gap < kSteepTol, "|dw| " + fmt("%.3e", moved) + ", mask " +
                                                    (binary ? "binary" : "NOT binary") + ", AS(b=1e6) vs BS " +
                                                    fmt("%.1e", gap)};
}

struct ToyModel
{
  Checkpoint best;
  double seconds = 0;
};

ToyModel train_toy(RunConfig const &cfg)
{
  auto const t0 = Clock::now();
  TrainResult r = train(cfg, [&](EpochLog const &e) {
    if (e.epoch % 10 == 0) {
      std::printf("    %s epoch %zu: loss %.2f, val psnr %.3f dB\n", to_string(cfg.train.mode), e.epoch, e.train_loss,
                  e.val_psnr);
      std::fflush(stdout);
    }
  });
  return {std::move(r.best), seconds_since(t0)};
}

EvalReport eval_toy(RunConfig cfg, Checkpoint const &ck, PatternMode mode, std::vector<ReconMethod> methods)
{
  cfg.eval.pattern = mode;
  cfg.eval.methods = std::move(methods);
  return evaluate(cfg, ck);
}

int shell(std::string const &cmd)
{
  int const status = std::system(cmd.c_str());
  return status == 0 ? 0 : 1;
}

Outcome determinism(fs::path const &root, std::string const &cli)
{
  char const *config = R"({
  "seeds": {"data": 21, "init": 22, "sampling": 23},
  "data": {"height": 32, "width": 32, "coils": 2, "n_train": 6, "n_val": 2, "n_test": 3, "out_dir": "data"},
  "train": {"gamma": 0.15, "calib_size": 4, "channels": 8, "blocks": 3, "cg_iters": 5, "epochs": 3,
            "manifest": "data/manifest.json", "checkpoint_dir": "run"},
  "eval": {"pattern": "learned-draw", "methods": ["modl", "tv", "zf"], "tv_iters": 50, "out_prefix": "report"}
})";
  std::vector<fs::path> dirs{root / "det_a", root / "det_b"};
  for (auto const &d : dirs) {
    fs::remove_all(d);
    fs::create_directories(d);
    std::string const text = config;
    write_file(d / "config.json", Bytes(text.begin(), text.end()));
    std::string const pre = "cd '" + d.string() + "' && '" + cli + "' ";
    std::string const quiet = " --config config.json > log.txt 2>&1";
    if (shell(pre + "gen-data" + quiet) || shell(pre + "train" + quiet) || shell(pre + "eval" + quiet)) {
      return {false, "command failed in " + d.string()};
    }
  }
  std::size_t compared = 0;
  for (char const *f : {"run/best.ckpt", "run/last.ckpt", "run/log.csv", "report.csv", "report.json",
                        "data/manifest.json", "data/train_000.ksd"}) {
    if (read_file(dirs[0] / f) != read_file(dirs[1] / f)) {
      return {false, std::string(f) + " differs"};
    }
    ++compared;
  }
  return {true, std::to_string(compared) + " artifacts bit-identical across two gen-data/train/eval runs"};
}

Outcome metrics_examples()
{
  bool pass = true;
  std::ostringstream why;
  CTensor ref(Shape{16, 16}, Cx(0.5));
  ref(3, 4) = 1.0;
  CTensor a = ref, b = ref;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] += 0.1;
    b[i] += 0.01;
  }
  double const p0 = psnr(ref, ref), p20 = psnr(a, ref), p40 = psnr(b, ref);
  pass = pass && p0 == kPsnrCap && std::abs(p20 - 20) < kMetricTol && std::abs(p40 - 40) < kMetricTol;
  why << "psnr " << p0 << "/" << fmt("%.12f", p20) << "/" << fmt("%.12f", p40);

  Rng rng(10);
  CTensor x(Shape{24, 24});
  for (auto &v : x.values()) {
    v = std::polar(rng.uniform(0.1, 1.0), rng.uniform(-1, 1));
  }
  double const s1 = ssim(x, x);
  double const s0 = ssim(CTensor(x.shape()), x);
  pass = pass && s1 == 1.0 && s0 < 0.1;
  why << ", ssim(x,x) " << s1 << ", ssim(0,x) " << fmt("%.3f", s0);

  std::vector<double> const v{40, 42, 44};
  Summary const s = aggregate(v);
  std::vector<double> const five{31.25, 29.5, 33.75, 30.0, 28.5};
  double const m5 = (31.25 + 29.5 + 33.75 + 30.0 + 28.5) / 5;
  double ss = 0;
  for (double t : five) {
    ss += (t - m5) * (t - m5);
  }
  Summary const s5 = aggregate(five);
  std::vector<double> const one{12.0};
  Summary const s1e = aggregate(one);
  pass = pass && s.mean == 42 && s.std == 2 && std::abs(s5.mean - m5) < kMetricTol &&
         std::abs(s5.std - std::sqrt(ss / 4)) < kMetricTol && s1e.std == 0 && s1e.n == 1;
  why << ", aggregate " << s.mean << " +- " << s.std;
  return {pass, why.str()};
}

} // namespace

int main(int argc, char **argv)
{
  fs::path const root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "kspace_loupe_acceptance";
  std::string const cli = argc > 2 ? argv[2] : "kspace-loupe";
  fs::create_directories(root);
  std::printf("acceptance work directory: %s\n", root.string().c_str());

  RunConfig const bs_cfg = toy_config(root, SamplingMode::Binary);
  RunConfig const as_cfg = toy_config(root, SamplingMode::Approx);
  auto const t_data = Clock::now();
  build_dataset(bs_cfg.data);
  double const data_seconds = seconds_since(t_data);

  criterion(1, "operator correctness", operators);
  criterion(2, "gradient suites", gradients);
  criterion(3, "CG dense oracle", cg_oracle);
  criterion(4, "sampling statistics", sampling_stats);
  criterion(5, "straight-through mechanism", [&] { return st_mechanism(bs_cfg); });

  ToyModel bs, as;
  EvalReport bs_draw, as_draw;
  criterion(6, "BS vs AS vs zero-filled", [&] {
    bs = train_toy(bs_cfg);
    auto const t0 = Clock::now();
    bs_draw = eval_toy(bs_cfg, bs.best, PatternMode::LearnedDraw, {ReconMethod::Modl, ReconMethod::ZeroFilled});
    double const bs_total = data_seconds + bs.seconds + seconds_since(t0);
    as = train_toy(as_cfg);
    as_draw = eval_toy(as_cfg, as.best, PatternMode::LearnedDraw, {ReconMethod::Modl, ReconMethod::ZeroFilled});
    double const b = bs_draw.of(ReconMethod::Modl).psnr_db.mean, bz = bs_draw.of(ReconMethod::ZeroFilled).psnr_db.mean;
    double const a = as_draw.of(ReconMethod::Modl).psnr_db.mean, az = as_draw.of(ReconMethod::ZeroFilled).psnr_db.mean;
    bool const pass = b >= a + kBsVsAsMargin && b >= bz + kOverZeroFilled && a >= az + kOverZeroFilled &&
                      bs_total < kPipelineSeconds;
    return Outcome{pass, "BS " + fmt("%.3f", b) + " dB, AS " + fmt("%.3f", a) + " dB, zf " + fmt("%.3f", bz) + "/" +
                           fmt("%.3f", az) + " dB; BS pipeline " + fmt("%.0f", bs_total) + " s"};
  });

  criterion(7, "learned top-k vs VD", [&] {
    auto const t0 = Clock::now();
    Checkpoint const ck = load_checkpoint(bs_cfg.checkpoint_path());
    auto const learned = eval_toy(bs_cfg, ck, PatternMode::LearnedTopk, {ReconMethod::Modl, ReconMethod::Tv});
    auto const vd = eval_toy(bs_cfg, ck, PatternMode::Vd, {ReconMethod::Modl, ReconMethod::Tv});
    double const lm = learned.of(ReconMethod::Modl).psnr_db.mean, vm = vd.of(ReconMethod::Modl).psnr_db.mean;
    double const lt = learned.of(ReconMethod::Tv).psnr_db.mean, vt = vd.of(ReconMethod::Tv).psnr_db.mean;
    bool const pass =
      lm - vm >= kLearnedVsVdMargin && lt - vt >= kLearnedVsVdMargin && seconds_since(t0) < kEvalSeconds;
    return Outcome{pass, "modl " + fmt("%.3f", lm) + " vs " + fmt("%.3f", vm) + " dB, tv " + fmt("%.3f", lt) +
                           " vs " + fmt("%.3f", vt) + " dB"};
  });

  criterion(8, "TV solver", [&] {
    Checkpoint const ck = load_checkpoint(bs_cfg.checkpoint_path());
    auto const m = load_manifest(bs_cfg.train.manifest);
    auto const test = load_split(m, "test");
    TVConfig tv;
    tv.alpha = bs_cfg.eval.tv_alpha;
    tv.iters = bs_cfg.eval.tv_iters;
    std::size_t ok = 0, total = 0;
    RunConfig vd_cfg = bs_cfg;
    vd_cfg.eval.pattern = PatternMode::Vd;
    for (std::size_t i = 0; i < test.size(); ++i) {
      auto const &s = test[i];
      for (RunConfig const *c : {&bs_cfg, static_cast<RunConfig const *>(&vd_cfg)}) {
        RTensor const mask = eval_mask(*c, &ck, s.height(), s.width(), i);
        CTensor const x = tv_recon(s.kspace, s.sens, mask, tv).image;
        CTensor const zf = zero_filled(s.kspace, s.sens, mask);
        ok += tv_objective(x, s.kspace, s.sens, mask, tv.alpha) <= tv_objective(zf, s.kspace, s.sens, mask, tv.alpha);
        ++total;
      }
    }
    TVConfig plain;
    plain.alpha = 0;
    plain.iters = 200;
    auto const &s = test.front();
    double const err =
      rel_diff(tv_recon(s.kspace, s.sens, RTensor(Shape{s.height(), s.width()}, 1.0), plain).image, s.label);
    return Outcome{ok == total && err < kTvRecoveryTol, std::to_string(ok) + "/" + std::to_string(total) +
                                                           " objectives at or below zero-filled, alpha=0 rel err " +
                                                           fmt("%.2e", err)};
  });

  criterion(9, "determinism", [&] { return determinism(root, cli); });
  criterion(10, "metrics", metrics_examples);

  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
