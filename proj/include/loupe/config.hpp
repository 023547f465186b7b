#pragma once

// Run configuration shared by the CLI, the trainer and the evaluator. One JSON
// document with optional sections "seeds", "data", "train" and "eval"; any
// key not listed below is rejected with ConfigError.

#include "loupe/mri.hpp"
#include "loupe/sampling.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace loupe {

struct Seeds
{
  std::uint64_t data = 1;     // dataset generation
  std::uint64_t init = 2;     // parameter initialization
  std::uint64_t sampling = 3; // training draws, shuffles, evaluation draws
  bool operator==(Seeds const &) const = default;
};

// Parses "a,b,c".
Seeds parse_seed_triplet(std::string const &text);

struct TrainConfig
{
  SamplingMode mode = SamplingMode::Binary;
  double gamma = 0.1;
  double slope_a = 0.25;
  double slope_b = 12.0; // Approx mode only
  std::size_t blocks = 5;
  std::size_t cg_iters = 10;
  std::size_t channels = 16;
  double lr = 1e-3;
  double lr_pattern = 1e-3; // learning rate for the pattern logits
  std::size_t epochs = 50;
  std::size_t batch_size = 1;
  std::size_t calib_size = 8;
  std::string manifest = "data/manifest.json";
  std::string checkpoint_dir = "runs/bs";
  bool operator==(TrainConfig const &) const = default;
};

enum class PatternMode
{
  LearnedTopk,
  LearnedDraw,
  Vd,
  File,
};

char const *to_string(PatternMode m);
PatternMode pattern_mode_from_string(std::string const &s);

enum class ReconMethod
{
  Modl,
  Tv,
  ZeroFilled,
};

char const *to_string(ReconMethod m);
ReconMethod recon_method_from_string(std::string const &s);

struct EvalConfig
{
  std::string checkpoint;   // empty: <checkpoint_dir>/best.ckpt
  std::string split = "test";
  PatternMode pattern = PatternMode::LearnedTopk;
  std::string pattern_file; // KSR1 [H,W] for PatternMode::File
  std::vector<ReconMethod> methods = {ReconMethod::Modl, ReconMethod::Tv, ReconMethod::ZeroFilled};
  std::size_t cg_iters = 30;
  double vd_exponent = 4.0;
  double tv_alpha = 2e-3;
  std::size_t tv_iters = 200;
  std::string out_prefix = "report"; // writes <prefix>.csv and <prefix>.json
  bool operator==(EvalConfig const &) const = default;
};

struct RunConfig
{
  Seeds seeds;
  DatasetConfig data;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
  std::filesystem::path checkpoint_path() const;
};

nlohmann::json to_json(RunConfig const &cfg);
// Missing keys keep their defaults; unknown keys and ill-typed values throw ConfigError.
RunConfig run_config_from_json(nlohmann::json const &j);
RunConfig load_run_config(std::filesystem::path const &path);
void save_run_config(std::filesystem::path const &path, RunConfig const &cfg);

// FNV-1a 64-bit hash of the compact JSON dump, as 16 hex digits.
std::string config_hash(RunConfig const &cfg);

} // namespace loupe
