#include "ntda/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ntda/error.hpp"

namespace ntda {

namespace {

double checked_eval(const ScalarFn& fn, const Matrix& at) {
  const double v = fn(at);
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& loss_fn, const Matrix& params, const Matrix& analytic_grad,
                                  double h, double tol) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: step h must be positive");
  if (params.rows() != analytic_grad.rows() || params.cols() != analytic_grad.cols()) {
    throw ShapeError("finite_diff_check: gradient " + analytic_grad.shape_str() + " for parameters " +
                     params.shape_str());
  }

  GradCheckReport report;
  Matrix probe = params;
  for (std::size_t r = 0; r < params.rows(); ++r) {
    for (std::size_t c = 0; c < params.cols(); ++c) {
      const double orig = probe(r, c);
      probe(r, c) = orig + h;
      const double up = checked_eval(loss_fn, probe);
      probe(r, c) = orig - h;
      const double down = checked_eval(loss_fn, probe);
      probe(r, c) = orig;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = analytic_grad(r, c);
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = rel;
        report.worst_index = {r, c};
      }
    }
  }
  report.passed = report.max_relative_error <= tol;
  return report;
}

}  // namespace ntda
