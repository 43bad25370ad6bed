#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "hsphere/matrix.hpp"
#include "oracles.hpp"

using hsphere::Matrix;
using hsphere::Rng;

TEST_CASE("matmul identity") {
  const Matrix eye = Matrix::from(2, 2, {1, 0, 0, 1});
  const Matrix v = Matrix::from(2, 1, {3, 4});
  const Matrix out = matmul(eye, v);
  CHECK(out(0, 0) == 3.0);
  CHECK(out(1, 0) == 4.0);
}

TEST_CASE("matmul hand arithmetic") {
  const Matrix a = Matrix::from(1, 2, {1, 2});
  const Matrix b = Matrix::from(2, 1, {3, 4});
  CHECK(matmul(a, b)(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(11);
  const Matrix a = rng.normal_matrix(5, 4);
  const Matrix b = rng.normal_matrix(4, 3);
  const Matrix got = matmul(a, b);
  const Matrix want = oracles::matmul_reference(a, b);
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j)
      CHECK(got(i, j) == doctest::Approx(want(i, j)).epsilon(1e-12));
}

TEST_CASE("matmul rejects dimension mismatch") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.normal_matrix(3, 4);
    const Matrix b = rng.normal_matrix(4, 5);
    const Matrix c = rng.normal_matrix(5, 2);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.rows(); ++i)
      for (std::size_t j = 0; j < left.cols(); ++j) {
        CHECK(std::abs(left(i, j) - right(i, j)) <=
              1e-9 * std::max(1.0, std::abs(left(i, j))));
      }
  }
}

TEST_CASE("l2_norm basics") {
  CHECK(hsphere::l2_norm(std::vector<double>{3, 4}) ==
        doctest::Approx(5.0).epsilon(1e-6));
  // Zero vector floors at sqrt(eps).
  CHECK(hsphere::l2_norm(std::vector<double>{0, 0}) ==
        doctest::Approx(std::sqrt(hsphere::kNormEpsilon)));
  CHECK_THROWS_AS(hsphere::l2_norm(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("l2_norm matches direct summation oracle") {
  Rng rng(13);
  const std::vector<double> v = rng.normal_vector(16);
  double ss = 0.0;
  for (double x : v) ss += x * x;
  CHECK(hsphere::l2_norm(v) ==
        doctest::Approx(std::sqrt(ss + hsphere::kNormEpsilon)));
}

TEST_CASE("l2_norm absolute homogeneity for unit-scale vectors") {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v = rng.normal_vector(8);
    const double nv = hsphere::l2_norm(v);
    if (nv < 1.0) {
      for (double& x : v) x /= nv;  // keep ||v|| >= 1 as the property requires
    }
    const double c = rng.uniform(-5.0, 5.0);
    std::vector<double> cv = v;
    for (double& x : cv) x *= c;
    CHECK(hsphere::l2_norm(cv) ==
          doctest::Approx(std::abs(c) * hsphere::l2_norm(v)).epsilon(1e-9));
  }
}

TEST_CASE("matrix data length invariant") {
  CHECK_THROWS_AS(Matrix(2, 3, std::vector<double>(5)), std::invalid_argument);
  const Matrix m(2, 3);
  CHECK(m.data().size() == 6);
  CHECK(m.all_finite());
}

TEST_CASE("rng determinism and bounds") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(5), d(5);
  for (int i = 0; i < 100; ++i) {
    CHECK(c.normal() == d.normal());
    const std::size_t idx = c.index(7);
    CHECK(idx < 7);
    CHECK(idx == d.index(7));
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == d.uniform());
  }
}

TEST_CASE("rng unit vector has unit norm") {
  Rng rng(21);
  for (std::size_t dim : {2u, 5u, 16u}) {
    const std::vector<double> v = rng.unit_vector(dim);
    CHECK(hsphere::l2_norm(v) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rng shuffle is a permutation") {
  Rng rng(22);
  std::vector<int> v(25);
  for (int i = 0; i < 25; ++i) v[i] = i;
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 25; ++i) CHECK(sorted[i] == i);
}
