#include "loupe/classical.hpp"
#include "loupe/evaluate.hpp"
#include "loupe/gradsuite.hpp"
#include "loupe/tensor_io.hpp"
#include "loupe/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace loupe;

namespace {

// Flags shared by the subcommands that read a run configuration.
struct CommonFlags
{
  std::string config;
  std::optional<std::string> seed;
};

void add_common(CLI::App *cmd, CommonFlags &f)
{
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "seed triplet data,init,sampling");
}

RunConfig base_config(CommonFlags const &f)
{
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) {
    cfg.seeds = parse_seed_triplet(*f.seed);
    cfg.data.seed = cfg.seeds.data;
  }
  return cfg;
}

template <typename T, typename U>
void apply(std::optional<T> const &flag, U &target)
{
  if (flag) {
    target = *flag;
  }
}

struct GenFlags
{
  CommonFlags common;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> height, width, coils, n_train, n_val, n_test;
  std::optional<double> noise_std;
};

struct TrainFlags
{
  CommonFlags common;
  std::optional<std::string> mode, manifest, checkpoint_dir;
  std::optional<double> gamma, slope_a, slope_b, lr, lr_pattern;
  std::optional<std::size_t> epochs, blocks, cg_iters, channels, batch_size, calib_size;
};

struct EvalFlags
{
  CommonFlags common;
  std::optional<std::string> checkpoint, pattern, pattern_file, split, out, manifest;
  std::vector<std::string> methods;
  std::optional<std::size_t> cg_iters;
};

struct ReconFlags
{
  EvalFlags eval;
  std::string input;
  std::string output;
  std::string png;
};

struct ExportFlags
{
  CommonFlags common;
  std::optional<std::string> checkpoint;
  std::string out_dir = ".";
};

struct VdFlags
{
  std::size_t height = 64, width = 64, calib_size = 8;
  double gamma = 0.1, exponent = 4.0;
  std::uint64_t seed = 1;
  std::string out = "vd.ksr";
  std::string png;
};

RunConfig eval_config(EvalFlags const &f)
{
  RunConfig cfg = base_config(f.common);
  apply(f.checkpoint, cfg.eval.checkpoint);
  apply(f.split, cfg.eval.split);
  apply(f.pattern_file, cfg.eval.pattern_file);
  apply(f.out, cfg.eval.out_prefix);
  apply(f.cg_iters, cfg.eval.cg_iters);
  apply(f.manifest, cfg.train.manifest);
  if (f.pattern) {
    cfg.eval.pattern = pattern_mode_from_string(*f.pattern);
  }
  if (!f.methods.empty()) {
    cfg.eval.methods.clear();
    for (auto const &m : f.methods) {
      cfg.eval.methods.push_back(recon_method_from_string(m));
    }
  }
  cfg.validate();
  return cfg;
}

std::optional<Checkpoint> maybe_checkpoint(RunConfig const &cfg)
{
  bool const learned = cfg.eval.pattern == PatternMode::LearnedTopk || cfg.eval.pattern == PatternMode::LearnedDraw;
  bool const modl =
    std::find(cfg.eval.methods.begin(), cfg.eval.methods.end(), ReconMethod::Modl) != cfg.eval.methods.end();
  if (!learned && !modl && cfg.eval.checkpoint.empty()) {
    return std::nullopt;
  }
  return load_checkpoint(cfg.checkpoint_path());
}

RTensor magnitude(CTensor const &x)
{
  RTensor m(x.shape());
  double peak = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = std::abs(x[i]);
    peak = std::max(peak, m[i]);
  }
  if (peak > 0) {
    for (auto &v : m.values()) {
      v /= peak;
    }
  }
  return m;
}

int run_gen(GenFlags const &f)
{
  RunConfig cfg = base_config(f.common);
  if (f.out_dir) {
    cfg.data.out_dir = *f.out_dir;
  }
  apply(f.height, cfg.data.height);
  apply(f.width, cfg.data.width);
  apply(f.coils, cfg.data.coils);
  apply(f.n_train, cfg.data.n_train);
  apply(f.n_val, cfg.data.n_val);
  apply(f.n_test, cfg.data.n_test);
  apply(f.noise_std, cfg.data.noise_std);
  cfg.validate();
  auto const m = build_dataset(cfg.data);
  std::printf("wrote %zu samples to %s\n", m.entries.size(), (cfg.data.out_dir / "manifest.json").string().c_str());
  return 0;
}

int run_train(TrainFlags const &f)
{
  RunConfig cfg = base_config(f.common);
  TrainConfig &t = cfg.train;
  if (f.mode) {
    t.mode = sampling_mode_from_string(*f.mode);
  }
  apply(f.manifest, t.manifest);
  apply(f.checkpoint_dir, t.checkpoint_dir);
  apply(f.gamma, t.gamma);
  apply(f.slope_a, t.slope_a);
  apply(f.slope_b, t.slope_b);
  apply(f.lr, t.lr);
  apply(f.lr_pattern, t.lr_pattern);
  apply(f.epochs, t.epochs);
  apply(f.blocks, t.blocks);
  apply(f.cg_iters, t.cg_iters);
  apply(f.channels, t.channels);
  apply(f.batch_size, t.batch_size);
  apply(f.calib_size, t.calib_size);
  cfg.validate();
  auto const res = train(cfg, [](EpochLog const &e) {
    std::printf("epoch %3zu  loss %.6g  val psnr %.4f dB\n", e.epoch, e.train_loss, e.val_psnr);
    std::fflush(stdout);
  });
  std::printf("best epoch %zu (%.4f dB); checkpoints in %s\n", res.best.epoch, res.best.val_psnr,
              t.checkpoint_dir.c_str());
  return 0;
}

int run_eval(EvalFlags const &f)
{
  RunConfig const cfg = eval_config(f);
  auto const report = evaluate(cfg, maybe_checkpoint(cfg));
  write_report(cfg.eval.out_prefix, report);
  for (auto const &s : report.summary) {
    std::printf("%-4s %-13s psnr %.4f +- %.4f dB  ssim %.4f +- %.4f  (n=%zu)\n", to_string(s.method),
                to_string(report.pattern), s.psnr_db.mean, s.psnr_db.std, s.ssim.mean, s.ssim.std, s.psnr_db.n);
  }
  return 0;
}

int run_recon(ReconFlags const &f)
{
  RunConfig const cfg = eval_config(f.eval);
  if (cfg.eval.methods.size() != 1) {
    throw ConfigError("recon takes exactly one --method");
  }
  auto const ckpt = maybe_checkpoint(cfg);
  KSpaceSample const s = read_sample(f.input);
  RTensor const mask = eval_mask(cfg, ckpt ? &*ckpt : nullptr, s.height(), s.width(), 0);
  CTensor x;
  switch (cfg.eval.methods.front()) {
  case ReconMethod::Modl:
    x = modl_reconstruct(s.kspace, s.sens, mask, ckpt->params, unroll_config(ckpt->config.train, cfg.eval.cg_iters))
          .back();
    break;
  case ReconMethod::Tv: {
    TVConfig tv;
    tv.alpha = cfg.eval.tv_alpha;
    tv.iters = cfg.eval.tv_iters;
    x = tv_recon(s.kspace, s.sens, mask, tv).image;
    break;
  }
  case ReconMethod::ZeroFilled:
    x = zero_filled(s.kspace, s.sens, mask);
    break;
  }
  write_tensor(f.output, to_real_pairs(x));
  if (!f.png.empty()) {
    write_png_gray(f.png, magnitude(x));
  }
  std::printf("psnr %.4f dB  ssim %.4f\n", psnr(x, s.label), ssim(x, s.label));
  return 0;
}

int run_export(ExportFlags const &f)
{
  RunConfig cfg = base_config(f.common);
  apply(f.checkpoint, cfg.eval.checkpoint);
  auto const ckpt = load_checkpoint(cfg.checkpoint_path());
  TrainConfig const &t = ckpt.config.train;
  RTensor const prob = learned_probability(t, ckpt.params);
  RTensor const mask = topk_pattern(prob, t.gamma, centered_calibration(prob.dim(0), prob.dim(1), t.calib_size));
  std::filesystem::path const dir = f.out_dir;
  write_png_gray(dir / "pattern.png", mask);
  write_png_gray(dir / "probability.png", prob);
  write_tensor(dir / "pattern.ksr", mask);
  write_tensor(dir / "probability.ksr", prob);
  std::printf("pattern with %zu of %zu samples written to %s\n", count_ones(mask), mask.size(), dir.string().c_str());
  return 0;
}

int run_vd(VdFlags const &f)
{
  Rng rng(f.seed);
  RTensor const mask =
    vd_pattern(f.height, f.width, f.gamma, f.exponent, centered_calibration(f.height, f.width, f.calib_size), rng);
  write_tensor(f.out, mask);
  if (!f.png.empty()) {
    write_png_gray(f.png, mask);
  }
  std::printf("vd pattern with %zu of %zu samples written to %s\n", count_ones(mask), mask.size(), f.out.c_str());
  return 0;
}

int run_gradcheck(std::string const &suite, std::uint64_t seed)
{
  auto const results = run_gradcheck_suites(suite_group_from_string(suite), seed);
  bool ok = true;
  for (auto const &r : results) {
    std::printf("%-20s %-9s max_rel_err %.3e  threshold %.0e  %s  (worst %s[%zu]: analytic %.6e, numeric %.6e)\n",
                r.name.c_str(), r.group.c_str(), r.max_rel_err, r.threshold, r.passed() ? "PASS" : "FAIL",
                r.report.worst_leaf.c_str(), r.report.worst_index, r.report.analytic, r.report.numeric);
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Joint learning of k-space sampling patterns and unrolled MRI reconstruction"};
  app.name("kspace-loupe");
  app.require_subcommand(1);

  GenFlags gen;
  auto *gen_cmd = app.add_subcommand("gen-data", "generate a synthetic multi-coil dataset");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--out-dir", gen.out_dir);
  gen_cmd->add_option("--height", gen.height);
  gen_cmd->add_option("--width", gen.width);
  gen_cmd->add_option("--coils", gen.coils);
  gen_cmd->add_option("--n-train", gen.n_train);
  gen_cmd->add_option("--n-val", gen.n_val);
  gen_cmd->add_option("--n-test", gen.n_test);
  gen_cmd->add_option("--noise-std", gen.noise_std);

  TrainFlags tr;
  auto *train_cmd = app.add_subcommand("train", "train pattern and reconstruction network jointly");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--mode", tr.mode, "BS (binary + straight-through) or AS (sigmoid relaxation)");
  train_cmd->add_option("--manifest", tr.manifest);
  train_cmd->add_option("--checkpoint-dir", tr.checkpoint_dir);
  train_cmd->add_option("--gamma", tr.gamma);
  train_cmd->add_option("--slope-a", tr.slope_a);
  train_cmd->add_option("--slope-b", tr.slope_b);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--lr-pattern", tr.lr_pattern);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--blocks", tr.blocks);
  train_cmd->add_option("--cg-iters", tr.cg_iters);
  train_cmd->add_option("--channels", tr.channels);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--calib-size", tr.calib_size);

  auto add_eval = [](CLI::App *cmd, EvalFlags &f) {
    add_common(cmd, f.common);
    cmd->add_option("--checkpoint", f.checkpoint);
    cmd->add_option("--manifest", f.manifest);
    cmd->add_option("--pattern", f.pattern, "learned-topk, learned-draw, vd or file");
    cmd->add_option("--pattern-file", f.pattern_file);
    cmd->add_option("--method", f.methods, "modl, tv or zf (repeatable)");
    cmd->add_option("--cg-iters", f.cg_iters);
  };
  EvalFlags ev;
  auto *eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint and pattern on a dataset split");
  add_eval(eval_cmd, ev);
  eval_cmd->add_option("--split", ev.split);
  eval_cmd->add_option("--out", ev.out, "report prefix; writes <out>.csv and <out>.json");

  ReconFlags rc;
  auto *recon_cmd = app.add_subcommand("recon", "reconstruct one sample file");
  add_eval(recon_cmd, rc.eval);
  recon_cmd->add_option("--input", rc.input)->required()->check(CLI::ExistingFile);
  recon_cmd->add_option("--output", rc.output, "raw tensor [H,W,2]")->required();
  recon_cmd->add_option("--png", rc.png, "normalized magnitude image");

  ExportFlags ex;
  auto *export_cmd = app.add_subcommand("export-pattern", "write the learned pattern as PNG and raw tensors");
  add_common(export_cmd, ex.common);
  export_cmd->add_option("--checkpoint", ex.checkpoint);
  export_cmd->add_option("--out-dir", ex.out_dir);

  VdFlags vd;
  auto *vd_cmd = app.add_subcommand("vd-pattern", "draw a variable-density pattern");
  vd_cmd->add_option("--height", vd.height);
  vd_cmd->add_option("--width", vd.width);
  vd_cmd->add_option("--gamma", vd.gamma);
  vd_cmd->add_option("--exponent", vd.exponent);
  vd_cmd->add_option("--calib-size", vd.calib_size);
  vd_cmd->add_option("--seed", vd.seed);
  vd_cmd->add_option("--out", vd.out);
  vd_cmd->add_option("--png", vd.png);

  std::string suite = "all";
  std::uint64_t gc_seed = 7;
  auto *gc_cmd = app.add_subcommand("gradcheck", "run the finite-difference gradient suites");
  gc_cmd->add_option("--suite", suite, "all, ops, denoiser or pipeline");
  gc_cmd->add_option("--seed", gc_seed);

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen_cmd) {
      return run_gen(gen);
    }
    if (*train_cmd) {
      return run_train(tr);
    }
    if (*eval_cmd) {
      return run_eval(ev);
    }
    if (*recon_cmd) {
      return run_recon(rc);
    }
    if (*export_cmd) {
      return run_export(ex);
    }
    if (*vd_cmd) {
      return run_vd(vd);
    }
    if (*gc_cmd) {
      return run_gradcheck(suite, gc_seed);
    }
  } catch (ConfigError const &e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
