#include "loupe/evaluate.hpp"
#include "loupe/classical.hpp"
#include "loupe/parallel.hpp"
#include "loupe/tensor_io.hpp"
#include "loupe/unrolled.hpp"

#include <algorithm>
#include <cstdio>

namespace loupe {

MethodSummary const &EvalReport::of(ReconMethod m) const
{
  for (auto const &s : summary) {
    if (s.method == m) {
      return s;
    }
  }
  throw Error(std::string("evaluation report has no method '") + to_string(m) + "'");
}

std::string EvalReport::csv() const
{
  std::string text = "sample_id,method,pattern,psnr_db,ssim\n";
  char buf[96];
  for (auto const &r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.psnr_db, r.ssim);
    text += r.sample_id + "," + to_string(r.method) + "," + to_string(pattern) + buf;
  }
  return text;
}

nlohmann::json EvalReport::summary_json() const
{
  auto stats = [](Summary const &s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; };
  nlohmann::json methods = nlohmann::json::object();
  for (auto const &s : summary) {
    methods[to_string(s.method)] = {{"psnr_db", stats(s.psnr_db)}, {"ssim", stats(s.ssim)}};
  }
  return {{"pattern", to_string(pattern)}, {"split", split}, {"config_hash", config_hash}, {"methods", methods}};
}

RTensor eval_mask(RunConfig const &cfg, Checkpoint const *ckpt, std::size_t height, std::size_t width,
                  std::size_t index)
{
  TrainConfig const &tc = ckpt ? ckpt->config.train : cfg.train;
  auto const calib = centered_calibration(height, width, tc.calib_size);
  Rng rng = Rng::derive(cfg.seeds.sampling, index);
  switch (cfg.eval.pattern) {
  case PatternMode::LearnedTopk:
  case PatternMode::LearnedDraw: {
    if (!ckpt) {
      throw ConfigError(std::string("pattern '") + to_string(cfg.eval.pattern) + "' needs a checkpoint");
    }
    RTensor const prob = learned_probability(tc, ckpt->params);
    if (prob.shape() != Shape{height, width}) {
      throw ShapeError("checkpoint pattern " + shape_str(prob.shape()) + " does not match the data");
    }
    return cfg.eval.pattern == PatternMode::LearnedTopk ? topk_pattern(prob, tc.gamma, calib)
                                                        : sample_binary(prob, rng);
  }
  case PatternMode::Vd:
    return vd_pattern(height, width, tc.gamma, cfg.eval.vd_exponent, calib, rng);
  case PatternMode::File: {
    RTensor m = read_tensor(cfg.eval.pattern_file);
    if (m.shape() != Shape{height, width}) {
      throw ShapeError("pattern file " + cfg.eval.pattern_file + " has shape " + shape_str(m.shape()));
    }
    return m;
  }
  }
  throw ConfigError("unknown pattern mode");
}

EvalReport evaluate(RunConfig const &cfg, std::optional<Checkpoint> const &ckpt)
{
  cfg.validate();
  bool const needs_model = std::count(cfg.eval.methods.begin(), cfg.eval.methods.end(), ReconMethod::Modl) > 0;
  if (needs_model && !ckpt) {
    throw ConfigError("method 'modl' needs a checkpoint");
  }
  auto const manifest = load_manifest(cfg.train.manifest);
  auto const paths = manifest.split(cfg.eval.split);
  auto const ids = manifest.split_ids(cfg.eval.split);
  if (paths.empty()) {
    throw Error("evaluate: split '" + cfg.eval.split + "' is empty");
  }
  Checkpoint const *ck = ckpt ? &*ckpt : nullptr;
  std::optional<UnrollConfig> ucfg;
  if (ck) {
    ucfg = unroll_config(ck->config.train, cfg.eval.cg_iters);
  }
  TVConfig tv;
  tv.alpha = cfg.eval.tv_alpha;
  tv.iters = cfg.eval.tv_iters;

  std::size_t const nm = cfg.eval.methods.size();
  std::vector<EvalRow> rows(paths.size() * nm);
  parallel_for(paths.size(), [&](std::size_t i) {
    KSpaceSample const s = read_sample(paths[i]);
    RTensor const mask = eval_mask(cfg, ck, s.height(), s.width(), i);
    for (std::size_t k = 0; k < nm; ++k) {
      ReconMethod const m = cfg.eval.methods[k];
      CTensor x;
      switch (m) {
      case ReconMethod::Modl:
        x = modl_reconstruct(s.kspace, s.sens, mask, ck->params, *ucfg).back();
        break;
      case ReconMethod::Tv:
        x = tv_recon(s.kspace, s.sens, mask, tv).image;
        break;
      case ReconMethod::ZeroFilled:
        x = zero_filled(s.kspace, s.sens, mask);
        break;
      }
      rows[i * nm + k] = {ids[i], m, psnr(x, s.label), ssim(x, s.label)};
    }
  });

  EvalReport report;
  report.pattern = cfg.eval.pattern;
  report.split = cfg.eval.split;
  report.config_hash = config_hash(cfg);
  for (std::size_t k = 0; k < nm; ++k) {
    std::vector<double> p, q;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      p.push_back(rows[i * nm + k].psnr_db);
      q.push_back(rows[i * nm + k].ssim);
    }
    report.summary.push_back({cfg.eval.methods[k], aggregate(p), aggregate(q)});
  }
  report.rows = std::move(rows);
  return report;
}

void write_report(std::string const &prefix, EvalReport const &report)
{
  std::string const csv = report.csv();
  std::string const js = report.summary_json().dump(2) + "\n";
  write_file(prefix + ".csv", Bytes(csv.begin(), csv.end()));
  write_file(prefix + ".json", Bytes(js.begin(), js.end()));
}

} // namespace loupe
