#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swisenet/gradcheck.hpp"

namespace swisenet {

struct GradSuiteOptions {
  std::uint64_t seed = 7;
  double eps = 1e-4;
  // Step for the end-to-end case. Its loss sits near 1.6 while many gradient
  // elements are below 1e-8, so one ulp of the loss over 2*eps has to stay
  // under the 1e-12 allowance at the relative-error floor.
  double end_to_end_eps = 4e-4;
  double tolerance = 1e-4;
  // Elements sampled per parameter in the end-to-end case (0 = all).
  std::size_t end_to_end_samples = 24;
};

struct GradSuiteCase {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
  bool passed = false;
  // Set for checks that are not a relative-error comparison.
  std::string note;
};

struct GradSuiteResult {
  std::vector<GradSuiteCase> cases;
  double seconds = 0.0;

  bool passed() const;
  double max_rel_error() const;
  // One line per parameter plus a verdict per case.
  std::string render() const;
};

/// Grad-checks conv2d, dense, batch norm, swish, swish_relu, the SE block,
/// channel attention, the Conv_SE block and a reduced end-to-end model, all
/// in double precision.
GradSuiteResult run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace swisenet
