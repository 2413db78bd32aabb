#pragma once

// Finite-difference audit of every training loss and both composite
// objectives at randomly drawn states, including the chain through a small
// extractor. Shared by the gradcheck command and the test suites.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ntda/gradcheck.hpp"

namespace ntda {

struct GradientCaseResult {
  std::string name;        // e.g. "loss_cls/features"
  std::size_t states = 0;  // states checked
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradientSuiteOptions {
  std::size_t states = 100;
  std::uint64_t seed = 0;
  double h = 1e-4;
  double tol = 1e-4;
};

std::vector<GradientCaseResult> run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace ntda
