#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lsgc::gradcheck {

struct Options {
  double step = 1e-4;       // central-difference half step
  double tolerance = 1e-3;  // on relative error
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-5;
  std::size_t coords_per_param = 6;  // sampled entries per full-model parameter
  std::uint64_t seed = 17;
};

struct CaseResult {
  std::string name;
  std::string worst_param;  // parameter (or input) with the largest error
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool ok = true;
};

struct Report {
  std::vector<CaseResult> cases;
  double seconds = 0.0;

  bool ok() const;
  std::vector<const CaseResult*> failures() const;
};

double relative_error(double analytic, double numeric, double floor);

// Every op used by both modes, checked in double precision, then a tiny
// model end to end in each mode with LoRA and the head active.
Report run(const Options& opts = {});

}  // namespace lsgc::gradcheck
