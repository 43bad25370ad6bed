#ifndef HSPHERE_PCA_HPP
#define HSPHERE_PCA_HPP

#include <span>
#include <vector>

#include "hsphere/matrix.hpp"

namespace hsphere {

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are returned in descending order with matching eigenvector
/// columns.
struct EigenResult {
  std::vector<double> values;
  Matrix vectors;  // column k is the eigenvector for values[k]
};
EigenResult jacobi_eigen_symmetric(const Matrix& a, double tol = 1e-14,
                                   int max_sweeps = 100);

/// Mean-centering plus projection onto the top principal directions of the
/// covariance. No whitening. `retained` can be smaller than the requested
/// component count when the covariance is rank-deficient.
struct PcaModel {
  std::vector<double> mean;
  Matrix components;  // d x retained, orthonormal columns
  std::vector<double> eigenvalues;
  std::size_t retained = 0;
};

PcaModel pca_fit(const Matrix& data, std::size_t keep);
std::vector<double> pca_apply(const PcaModel& model, std::span<const double> x);
std::vector<double> pca_reconstruct(const PcaModel& model,
                                    std::span<const double> projected);
Matrix pca_apply_rows(const PcaModel& model, const Matrix& data);

}  // namespace hsphere

#endif  // HSPHERE_PCA_HPP
