#include <doctest.h>

#include <random>

#include "ntda/error.hpp"
#include "ntda/gradcheck.hpp"
#include "ntda/matrix.hpp"
#include "support.hpp"

using namespace ntda;

TEST_CASE("matmul by identity returns the operand") {
  const Matrix a{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  CHECK(matmul(Matrix::identity(3), a) == a);
  CHECK(matmul(a, Matrix::identity(3)) == a);
}

TEST_CASE("matmul hand example") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0}, {1}};
  CHECK(matmul(a, b) == Matrix{{2}, {4}});
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  CHECK_THROWS_WITH_AS(matmul(Matrix(2, 3), Matrix(4, 1)), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("matmul agrees with the reference product and is associative") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = test::random_matrix(4, 5, rng);
    const Matrix b = test::random_matrix(5, 3, rng);
    const Matrix c = test::random_matrix(3, 6, rng);
    CHECK(test::max_abs_diff(matmul(a, b), test::naive_product(a, b)) < 1e-14);
    CHECK(test::max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-12);
  }
}

TEST_CASE("transposed products match explicit transposes") {
  std::mt19937_64 rng(8);
  const Matrix a = test::random_matrix(6, 4, rng);
  const Matrix b = test::random_matrix(6, 3, rng);
  const Matrix c = test::random_matrix(5, 4, rng);
  CHECK(test::max_abs_diff(matmul_tn(a, b), test::naive_product(transpose(a), b)) < 1e-14);
  CHECK(test::max_abs_diff(matmul_nt(a, c), test::naive_product(a, transpose(c))) < 1e-14);
  CHECK_THROWS_AS(matmul_tn(a, c), ShapeError);
  CHECK_THROWS_AS(matmul_nt(a, b), ShapeError);
}

TEST_CASE("row helpers") {
  const Matrix a{{1, 2}, {3, 4}, {5, 6}};
  const std::vector<std::size_t> idx{2, 0};
  CHECK(select_rows(a, idx) == Matrix{{5, 6}, {1, 2}});
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(select_rows(a, bad), ShapeError);

  const std::vector<double> bias{10, 20};
  CHECK(add_row_bias(a, bias) == Matrix{{11, 22}, {13, 24}, {15, 26}});
  const std::vector<double> short_bias{1};
  CHECK_THROWS_AS(add_row_bias(a, short_bias), ShapeError);
  CHECK(column_sums(a) == std::vector<double>{9, 12});
}

TEST_CASE("Matrix construction checks") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS((Matrix{{1, 2}, {3}}), ShapeError);
  Matrix m(1, 2);
  m(0, 1) = std::nan("");
  CHECK_FALSE(m.all_finite());
  CHECK(m.shape_str() == "[1x2]");
}

TEST_CASE("relu forward and backward") {
  CHECK(relu_forward(Matrix{{-1, 2}}) == Matrix{{0, 2}});
  CHECK(relu_forward(Matrix(3, 2)) == Matrix(3, 2));
  CHECK(relu_backward(Matrix{{-1, 2}}, Matrix{{5, 7}}) == Matrix{{0, 7}});
  // Subgradient 0 at exactly zero.
  CHECK(relu_backward(Matrix{{0.0}}, Matrix{{3.0}}) == Matrix{{0.0}});
  CHECK_THROWS_AS(relu_backward(Matrix(1, 2), Matrix(2, 1)), ShapeError);
}

TEST_CASE("pairwise_sqdist examples") {
  CHECK(pairwise_sqdist(Matrix{{0, 0}}, Matrix{{3, 4}}) == Matrix{{25}});

  std::mt19937_64 rng(9);
  const Matrix f = test::random_matrix(5, 3, rng, -10, 10);
  const Matrix d = pairwise_sqdist(f, f);
  for (std::size_t i = 0; i < 5; ++i) CHECK(d(i, i) == 0.0);
  CHECK_THROWS_AS(pairwise_sqdist(Matrix(2, 3), Matrix(2, 4)), ShapeError);
}

TEST_CASE("pairwise_sqdist matches the expanded dot-product form and is symmetric") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix f = test::random_matrix(6, 4, rng, -3, 3);
    const Matrix p = test::random_matrix(3, 4, rng, -3, 3);
    const Matrix d = pairwise_sqdist(f, p);
    const Matrix ft = pairwise_sqdist(p, f);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        double ff = 0, pp = 0, fp = 0;
        for (std::size_t k = 0; k < 4; ++k) {
          ff += f(i, k) * f(i, k);
          pp += p(j, k) * p(j, k);
          fp += f(i, k) * p(j, k);
        }
        CHECK(d(i, j) == doctest::Approx(ff + pp - 2 * fp).epsilon(1e-12));
        CHECK(d(i, j) >= 0.0);
        CHECK(d(i, j) == ft(j, i));
      }
    }
  }
}

TEST_CASE("pairwise_sqdist_backward agrees with finite differences") {
  std::mt19937_64 rng(11);
  const Matrix f = test::random_matrix(4, 3, rng);
  const Matrix p = test::random_matrix(2, 3, rng);
  const Matrix up = test::random_matrix(4, 2, rng);
  auto contract = [&](const Matrix& d) {
    double s = 0;
    for (std::size_t i = 0; i < d.size(); ++i) s += d.flat()[i] * up.flat()[i];
    return s;
  };
  const SqdistGrad g = pairwise_sqdist_backward(f, p, up);
  CHECK(finite_diff_check([&](const Matrix& x) { return contract(pairwise_sqdist(x, p)); }, f, g.features, 1e-5, 1e-7)
            .passed);
  CHECK(finite_diff_check([&](const Matrix& x) { return contract(pairwise_sqdist(f, x)); }, p, g.prototypes, 1e-5,
                          1e-7)
            .passed);
  CHECK_THROWS_AS(pairwise_sqdist_backward(f, p, Matrix(4, 3)), ShapeError);
}
