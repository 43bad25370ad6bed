#include "hsphere/normalize.hpp"

#include <cmath>
#include <stdexcept>

namespace hsphere {

NormContext normalize_forward(std::span<const double> x) {
  NormContext ctx;
  ctx.input.assign(x.begin(), x.end());
  ctx.norm = l2_norm(x);
  ctx.output.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ctx.output[i] = x[i] / ctx.norm;
  return ctx;
}

std::vector<double> normalize_backward(const NormContext& ctx,
                                       std::span<const double> grad_output) {
  if (grad_output.size() != ctx.output.size()) {
    throw std::invalid_argument("normalize_backward: gradient length mismatch");
  }
  const double radial = dot(grad_output, ctx.output);
  std::vector<double> grad(ctx.output.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = (grad_output[i] - ctx.output[i] * radial) / ctx.norm;
  }
  return grad;
}

RowNormContext normalize_rows(const Matrix& m) {
  RowNormContext ctx;
  ctx.normalized = Matrix(m.rows(), m.cols());
  ctx.norms.resize(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double nrm = l2_norm(m.row(r));
    ctx.norms[r] = nrm;
    for (std::size_t c = 0; c < m.cols(); ++c) ctx.normalized(r, c) = m(r, c) / nrm;
  }
  return ctx;
}

ColNormContext normalize_cols(const Matrix& m) {
  ColNormContext ctx;
  ctx.normalized = Matrix(m.rows(), m.cols());
  ctx.norms.assign(m.cols(), 0.0);
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double ss = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) ss += m(r, c) * m(r, c);
    const double nrm = std::sqrt(ss + kNormEpsilon);
    ctx.norms[c] = nrm;
    for (std::size_t r = 0; r < m.rows(); ++r) ctx.normalized(r, c) = m(r, c) / nrm;
  }
  return ctx;
}

Matrix normalize_rows_backward(const RowNormContext& ctx, const Matrix& grad_norm) {
  Matrix grad(ctx.normalized.rows(), ctx.normalized.cols());
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    const double radial = dot(grad_norm.row(r), ctx.normalized.row(r));
    for (std::size_t c = 0; c < grad.cols(); ++c) {
      grad(r, c) =
          (grad_norm(r, c) - ctx.normalized(r, c) * radial) / ctx.norms[r];
    }
  }
  return grad;
}

Matrix normalize_cols_backward(const ColNormContext& ctx, const Matrix& grad_norm) {
  Matrix grad(ctx.normalized.rows(), ctx.normalized.cols());
  for (std::size_t c = 0; c < grad.cols(); ++c) {
    double radial = 0.0;
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      radial += grad_norm(r, c) * ctx.normalized(r, c);
    }
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      grad(r, c) =
          (grad_norm(r, c) - ctx.normalized(r, c) * radial) / ctx.norms[c];
    }
  }
  return grad;
}

}  // namespace hsphere
