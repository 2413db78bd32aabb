#pragma once

#include <cstddef>
#include <functional>
#include <utility>

#include "ntda/matrix.hpp"

namespace ntda {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::pair<std::size_t, std::size_t> worst_index{0, 0};
  bool passed = true;
};

using ScalarFn = std::function<double(const Matrix&)>;

// Central-difference check of analytic_grad against loss_fn at params.
// Relative error per entry is |a - n| / max(1e-8, |a| + |n|).
// Throws NumericError if loss_fn returns a non-finite value.
GradCheckReport finite_diff_check(const ScalarFn& loss_fn, const Matrix& params, const Matrix& analytic_grad,
                                  double h, double tol);

}  // namespace ntda
