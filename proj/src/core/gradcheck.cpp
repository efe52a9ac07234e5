#include "swisenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swisenet/rng.hpp"

namespace swisenet {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& p : params) {
    if (std::isnan(p.max_rel_error)) return p.max_rel_error;
    worst = std::max(worst, p.max_rel_error);
  }
  return worst;
}

bool GradCheckReport::passed(double tolerance) const {
  for (const auto& p : params)
    if (p.checked == 0) return false;
  return max_rel_error() <= tolerance;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Evaluation {
  double value;
  std::uint64_t branches;
};

Evaluation evaluate(const LossProgram& program) {
  Tape<double> tape(false);
  tape.track_branches(true);
  const double v = program(tape).value().item();
  return {v, tape.branch_signature()};
}

}  // namespace

GradCheckReport grad_check(const LossProgram& program, std::span<Parameter<double>* const> params,
                           const GradCheckOptions& options) {
  for (auto* p : params) {
    p->grad = Tensor<double>(p->value.shape());
  }
  std::uint64_t base_branches = 0;
  {
    Tape<double> tape;
    tape.track_branches(true);
    Var<double> loss = program(tape);
    base_branches = tape.branch_signature();
    tape.backward(loss);
  }

  GradCheckReport report;
  Rng rng(options.seed);
  for (auto* p : params) {
    ParamGradError entry;
    entry.name = p->name;
    std::vector<std::size_t> indices(p->value.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    std::size_t budget = indices.size();
    if (options.max_elements_per_param > 0 && indices.size() > options.max_elements_per_param) {
      rng.shuffle(indices);
      budget = options.max_elements_per_param;
    }
    for (std::size_t idx : indices) {
      if (entry.checked == budget) break;
      const double original = p->value[idx];
      double h = options.eps * std::max(1.0, std::abs(original));
      Evaluation up{}, down{};
      bool smooth = false;
      for (int attempt = 0; attempt <= options.kink_retries; ++attempt, h *= 0.5) {
        p->value[idx] = original + h;
        up = evaluate(program);
        p->value[idx] = original - h;
        down = evaluate(program);
        p->value[idx] = original;
        smooth = up.branches == base_branches && down.branches == base_branches;
        if (smooth) break;
      }
      if (!smooth) {
        ++entry.kinks_skipped;
        continue;
      }
      const double numeric = (up.value - down.value) / (2.0 * h);
      const double analytic = p->grad[idx];
      const double err = relative_error(analytic, numeric);
      if (entry.checked == 0 || err > entry.max_rel_error || std::isnan(err)) {
        entry.max_rel_error = err;
        entry.worst_index = idx;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
      ++entry.checked;
    }
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace swisenet
