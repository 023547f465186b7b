#pragma once

// Finite-difference gradient suites over every tape op, the denoiser and the
// full sampling + unrolled reconstruction pipeline.

#include "loupe/autodiff.hpp"

#include <string>
#include <vector>

namespace loupe {

struct SuiteResult
{
  std::string name;
  std::string group; // "op", "denoiser" or "pipeline"
  double max_rel_err = 0;
  double threshold = 0;
  ad::GradcheckReport report;
  bool passed() const { return max_rel_err < threshold; }
};

enum class SuiteGroup
{
  All,
  Ops,
  Denoiser,
  Pipeline,
};

SuiteGroup suite_group_from_string(std::string const &s);

// Thresholds: single ops 1e-7 (quadratic form 1e-8), denoiser 1e-5, pipeline 1e-4.
std::vector<SuiteResult> run_gradcheck_suites(SuiteGroup group = SuiteGroup::All, std::uint64_t seed = 7);

} // namespace loupe
