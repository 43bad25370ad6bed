#ifndef HSPHERE_NORMALIZE_HPP
#define HSPHERE_NORMALIZE_HPP

#include <span>
#include <vector>

#include "hsphere/matrix.hpp"

namespace hsphere {

/// State kept by the forward pass so the backward rule is exact: the raw
/// input x, its stabilized norm ||x|| = sqrt(sum x_i^2 + eps), and the unit
/// output x~ = x / ||x||.
struct NormContext {
  std::vector<double> input;
  double norm = 0.0;
  std::vector<double> output;
};

/// x~ = x / sqrt(sum x_i^2 + eps). Maps onto the unit hypersphere; the
/// epsilon floor makes the zero vector a fixed point instead of a crash.
NormContext normalize_forward(std::span<const double> x);

/// Backward rule, treating ||x|| as an independent variable:
///   dL/dx = (g - x~ <g, x~>) / ||x||
/// i.e. the incoming gradient g projected onto the tangent space of the
/// sphere at x~, scaled by 1/||x||. Orthogonal to x by construction.
std::vector<double> normalize_backward(const NormContext& ctx,
                                       std::span<const double> grad_output);

/// Row-wise (per sample) or column-wise (per agent) batched normalization.
/// Keeps x~ and the norms so the backward pass reuses the forward values.
struct RowNormContext {
  Matrix normalized;          // same shape as input, rows on the unit sphere
  std::vector<double> norms;  // one per row
};
struct ColNormContext {
  Matrix normalized;          // same shape as input, columns on the unit sphere
  std::vector<double> norms;  // one per column
};

RowNormContext normalize_rows(const Matrix& m);
ColNormContext normalize_cols(const Matrix& m);

/// Chain grad w.r.t. normalized rows/cols back to the raw matrix.
Matrix normalize_rows_backward(const RowNormContext& ctx, const Matrix& grad_norm);
Matrix normalize_cols_backward(const ColNormContext& ctx, const Matrix& grad_norm);

}  // namespace hsphere

#endif  // HSPHERE_NORMALIZE_HPP
