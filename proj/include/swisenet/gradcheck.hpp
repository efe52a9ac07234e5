#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "swisenet/autograd.hpp"

namespace swisenet {

struct GradCheckOptions {
  // Step for element p is eps * max(1, |p|).
  double eps = 1e-4;
  // 0 checks every element; otherwise a seeded sample of this many per parameter.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
  // When +/-h crosses a kink, retry with h halved up to this many times
  // before skipping the element.
  int kink_retries = 4;
};

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Elements whose +/-h evaluations changed a relu sign or a max-pool
  // winner at every retried step; the central difference is not a
  // derivative there.
  std::size_t kinks_skipped = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;

  double max_rel_error() const;
  // Every parameter had at least one comparable element and all were within tolerance.
  bool passed(double tolerance) const;
};

// Builds the scalar loss on the given tape from the current parameter values.
using LossProgram = std::function<Var<double>(Tape<double>&)>;

// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `program` with central differences
/// (f(p+h) - f(p-h)) / 2h for every element (or a sample) of every listed
/// parameter. Elements whose perturbed evaluations cross a kink are retried
/// with smaller steps, then skipped and counted; with sampling, the next
/// candidate takes their place.
/// Parameter values are restored afterwards; their grads hold the analytic
/// gradient.
GradCheckReport grad_check(const LossProgram& program, std::span<Parameter<double>* const> params,
                           const GradCheckOptions& options = {});

}  // namespace swisenet
