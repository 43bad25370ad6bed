#ifndef HSPHERE_GRADCHECK_HPP
#define HSPHERE_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hsphere/losses.hpp"

namespace hsphere {

/// Central finite-difference audit of the analytic gradients. The checker
/// only ever evaluates loss *values*, so it stays independent of the
/// backward implementations it verifies.
enum class GradCheckTarget {
  BaselineSoftmax,
  ScaledCosineFixed,
  ScaledCosineLearned,
  CContrastive,
  CTriplet,
  CTripletCenter,
  Combination,
  NormalizeBackward,
};

std::string gradcheck_target_name(GradCheckTarget t);
const std::vector<GradCheckTarget>& all_gradcheck_targets();

struct GradCheckOptions {
  int trials = 100;
  double step = 1e-6;        // central-difference half step
  double tolerance = 1e-5;   // relative error bound
  double kink_margin = 1e-3; // instances with any |hinge argument| below this
                             // are resampled
  std::uint64_t seed = 42;
};

struct GradCheckReport {
  GradCheckTarget target{};
  int trials = 0;
  int failures = 0;
  double max_rel_error = 0.0;
  bool passed() const { return failures == 0; }
};

GradCheckReport run_gradcheck(GradCheckTarget target, const GradCheckOptions& opts);

/// |a - b| / max(|a|, |b|, 1e-3): relative error with an absolute floor so
/// near-zero gradients are compared at finite-difference noise scale.
double gradcheck_rel_error(double analytic, double numeric);

}  // namespace hsphere

#endif  // HSPHERE_GRADCHECK_HPP
