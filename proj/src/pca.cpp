#include "hsphere/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hsphere {

EigenResult jacobi_eigen_symmetric(const Matrix& a, double tol, int max_sweeps) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("jacobi_eigen_symmetric: matrix must be square");
  }
  const std::size_t n = a.rows();
  Matrix d = a;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  auto off_diag_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += d(i, j) * d(i, j);
    return std::sqrt(s);
  };

  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(d(i, i)));
  scale = std::max(scale, off_diag_norm());
  const double stop = tol * std::max(scale, 1e-300);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_diag_norm() <= stop) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = d(p, q);
        if (std::abs(apq) <= stop / (n * n)) continue;
        const double app = d(p, p);
        const double aqq = d(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0)
                             ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                             : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double dkp = d(k, p);
          const double dkq = d(k, q);
          d(k, p) = c * dkp - s * dkq;
          d(k, q) = s * dkp + c * dkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double dpk = d(p, k);
          const double dqk = d(q, k);
          d(p, k) = c * dpk - s * dqk;
          d(q, k) = s * dpk + c * dqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return d(i, i) > d(j, j); });

  EigenResult result;
  result.values.resize(n);
  result.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    result.values[k] = d(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) result.vectors(i, k) = v(i, order[k]);
  }
  return result;
}

PcaModel pca_fit(const Matrix& data, std::size_t keep) {
  if (data.rows() < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");
  if (keep > data.cols()) throw std::invalid_argument("pca_fit: keep > cols");
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += data(i, j);
  for (double& m : model.mean) m /= static_cast<double>(n);

  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = data(i, a) - model.mean[a];
      for (std::size_t b = a; b < d; ++b) {
        cov(a, b) += xa * (data(i, b) - model.mean[b]);
      }
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(n - 1);
      cov(b, a) = cov(a, b);
    }

  EigenResult eig = jacobi_eigen_symmetric(cov);

  // Rank-deficient covariance yields fewer usable directions than requested.
  const double lead = std::max(eig.values.empty() ? 0.0 : eig.values[0], 0.0);
  const double rank_tol = lead * static_cast<double>(d) * 1e-12;
  std::size_t rank = 0;
  while (rank < d && eig.values[rank] > rank_tol) ++rank;
  model.retained = std::min(keep, rank);

  model.eigenvalues.assign(eig.values.begin(),
                           eig.values.begin() + model.retained);
  model.components = Matrix(d, model.retained);
  for (std::size_t k = 0; k < model.retained; ++k)
    for (std::size_t i = 0; i < d; ++i)
      model.components(i, k) = eig.vectors(i, k);
  return model;
}

std::vector<double> pca_apply(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.mean.size()) {
    throw std::invalid_argument("pca_apply: dimension mismatch");
  }
  std::vector<double> out(model.retained, 0.0);
  for (std::size_t k = 0; k < model.retained; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += model.components(i, k) * (x[i] - model.mean[i]);
    }
    out[k] = s;
  }
  return out;
}

std::vector<double> pca_reconstruct(const PcaModel& model,
                                    std::span<const double> projected) {
  if (projected.size() != model.retained) {
    throw std::invalid_argument("pca_reconstruct: dimension mismatch");
  }
  std::vector<double> out(model.mean);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < model.retained; ++k) {
      out[i] += model.components(i, k) * projected[k];
    }
  }
  return out;
}

Matrix pca_apply_rows(const PcaModel& model, const Matrix& data) {
  Matrix out(data.rows(), model.retained);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const std::vector<double> p = pca_apply(model, data.row(r));
    for (std::size_t k = 0; k < model.retained; ++k) out(r, k) = p[k];
  }
  return out;
}

}  // namespace hsphere
