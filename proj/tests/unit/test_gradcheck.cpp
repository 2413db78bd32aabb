#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ntda/error.hpp"
#include "ntda/gradcheck.hpp"
#include "support.hpp"

using namespace ntda;

namespace {

double sum_of_squares(const Matrix& x) {
  double s = 0;
  for (double v : x.flat()) s += v * v;
  return s;
}

}  // namespace

TEST_CASE("quadratic with exact gradient passes at tight tolerance") {
  std::mt19937_64 rng(1);
  const Matrix theta = test::random_matrix(3, 4, rng);
  const GradCheckReport r = finite_diff_check(sum_of_squares, theta, 2.0 * theta, 1e-4, 1e-6);
  CHECK(r.passed);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("corrupted gradient entry is caught and located") {
  std::mt19937_64 rng(2);
  const Matrix theta = test::random_matrix(3, 4, rng, 0.5, 1.0);
  Matrix grad = 2.0 * theta;
  grad(2, 1) += 0.1;
  const GradCheckReport r = finite_diff_check(sum_of_squares, theta, grad, 1e-4, 1e-4);
  CHECK_FALSE(r.passed);
  CHECK(r.worst_index == std::pair<std::size_t, std::size_t>{2, 1});
}

TEST_CASE("non-finite loss is an oracle failure") {
  const Matrix theta{{1.0}};
  auto bad = [](const Matrix&) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(finite_diff_check(bad, theta, Matrix{{0.0}}, 1e-4, 1e-4), NumericError);
}

TEST_CASE("step size must be positive and shapes must match") {
  const Matrix theta{{1.0}};
  CHECK_THROWS_AS(finite_diff_check(sum_of_squares, theta, theta, 0.0, 1e-4), ConfigError);
  CHECK_THROWS_AS(finite_diff_check(sum_of_squares, theta, Matrix(1, 2), 1e-4, 1e-4), ShapeError);
}
