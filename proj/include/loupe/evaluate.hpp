#pragma once

// Evaluation harness: builds a binary mask per sample, reconstructs with each
// requested method and scores PSNR / SSIM against the label.

#include "loupe/config.hpp"
#include "loupe/metrics.hpp"
#include "loupe/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace loupe {

struct EvalRow
{
  std::string sample_id;
  ReconMethod method;
  double psnr_db = 0;
  double ssim = 0;
};

struct MethodSummary
{
  ReconMethod method;
  Summary psnr_db;
  Summary ssim;
};

struct EvalReport
{
  PatternMode pattern;
  std::string split;
  std::vector<EvalRow> rows; // sample-major, methods in request order
  std::vector<MethodSummary> summary;
  std::string config_hash;

  MethodSummary const &of(ReconMethod m) const;
  std::string csv() const;
  nlohmann::json summary_json() const;
};

/// Mask for one evaluation sample. Learned modes need the checkpoint; draws
/// (learned-draw, vd) use stream `index` of the sampling seed.
RTensor eval_mask(RunConfig const &cfg, Checkpoint const *ckpt, std::size_t height, std::size_t width,
                  std::size_t index);

/// Runs the evaluation over `cfg.eval.split`. The model hyperparameters and
/// weights come from `ckpt`, which may be empty when neither the pattern nor
/// the methods need a trained model.
EvalReport evaluate(RunConfig const &cfg, std::optional<Checkpoint> const &ckpt);

// Writes <prefix>.csv and <prefix>.json.
void write_report(std::string const &prefix, EvalReport const &report);

} // namespace loupe
