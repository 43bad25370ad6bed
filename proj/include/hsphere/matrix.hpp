#ifndef HSPHERE_MATRIX_HPP
#define HSPHERE_MATRIX_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hsphere {

/// Dense row-major matrix of doubles. The one container used for features
/// (one row per sample), weights (one column per class) and gradients.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
  /// Row-major initializer, e.g. Matrix::from(2, 2, {a, b, c, d}).
  static Matrix from(std::size_t rows, std::size_t cols,
                     std::initializer_list<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::vector<double> col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> v);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transposed() const;
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Standard product; throws std::invalid_argument on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

/// sqrt(sum(v_i^2) + eps). The epsilon keeps the downstream division safe for
/// zero vectors without disturbing unit-scale inputs.
inline constexpr double kNormEpsilon = 1e-12;
double l2_norm(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);

/// Deterministic PRNG: std::mt19937_64 under the hood (bit-exact stream for a
/// given seed on every conforming platform), with hand-rolled distribution
/// transforms so results do not depend on the standard library's
/// implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (second value cached).
  double normal();
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::size_t index(std::size_t n);
  void shuffle(std::vector<int>& v);

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);
  std::vector<double> normal_vector(std::size_t n, double stddev = 1.0);
  /// Uniformly distributed point on the unit sphere in `dim` dimensions.
  std::vector<double> unit_vector(std::size_t dim);

 private:
  std::mt19937_64 engine_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace hsphere

#endif  // HSPHERE_MATRIX_HPP
