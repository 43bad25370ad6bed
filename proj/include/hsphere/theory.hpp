#ifndef HSPHERE_THEORY_HPP
#define HSPHERE_THEORY_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "hsphere/matrix.hpp"

namespace hsphere {

/// Closed-form minimum of the softmax loss once features and weight columns
/// are normalized to squared norm `ell_sq`:
///   log(1 + (n-1) * exp(-(n/(n-1)) * ell_sq))
struct Prop2Bound {
  int n = 0;
  double ell_sq = 0.0;
  double bound = 0.0;
};

double prop2_bound(int n, double ell_sq);
Prop2Bound prop2_bound_info(int n, double ell_sq);

/// Scaling monotonicity of the no-bias softmax: for i = argmax_j W_j^T f and
/// any s > 1, the class-i probability of s*f is at least that of f.
/// Returns true when P_i(s f) >= P_i(f) - 1e-12.
bool prop1_check(const Matrix& w, std::span<const double> f, double s);

/// n unit vectors in dimension `dim` (requires n <= dim + 1) with all
/// pairwise inner products equal to -1/(n-1) and zero mean: the vertices of
/// a centered regular simplex. Columns of the result are the vectors.
Matrix simplex_agents(std::size_t dim, std::size_t n);

/// Numerically probes how closely a well-separated configuration (features
/// tied to agents, agents free) can approach the closed-form bound at scale
/// ell_sq. Seeds with the regular simplex when it exists, otherwise random
/// unit columns, then runs gradient descent on the tied configuration.
struct Prop2Gap {
  double achieved = 0.0;
  double bound = 0.0;
  double gap = 0.0;  // achieved - bound
  bool converged = false;
  int iterations = 0;
};
Prop2Gap prop2_empirical_gap(std::size_t dim, std::size_t n, double ell_sq,
                             std::uint64_t seed = 1, int max_iters = 20000,
                             double grad_tol = 1e-9);

/// Mean squared difference between sample-to-sample and sample-to-agent
/// distances for one class cluster, plus its triangle-inequality bound
/// mean d(f_j, W)^2. Inputs are normalized internally, so the metric is the
/// Euclidean distance between unit vectors.
struct Distortion {
  double distortion = 0.0;
  double bound = 0.0;
};
Distortion prop3_distortion(std::span<const double> f0, const Matrix& cluster,
                            std::span<const double> agent);

/// Exponential moving average used to display the distortion bound during
/// training.
struct DistortionTracker {
  double ema = 0.0;
  double decay = 0.99;

  void update(double value);
};
DistortionTracker tracker_update(DistortionTracker t, double value);

}  // namespace hsphere

#endif  // HSPHERE_THEORY_HPP
