#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilmt/param_store.hpp"

namespace ilmt {

/// Scalar objective. When `grads` is non-null the callee accumulates the
/// reverse-mode gradient into it (grads is pre-zeroed by the caller).
using Objective = std::function<double(const ParamStore& params, ParamStore* grads)>;

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Below this magnitude the error is measured absolutely.
  double abs_floor = 1e-6;
  std::size_t max_elements = 2000;  // larger stores are subsampled
  std::size_t subsample = 400;      // at least 100
  std::uint64_t seed = 17;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the reverse-mode gradient of `f` against central differences.
inline GradCheckReport grad_check(const Objective& f, const ParamStore& params,
                                  const GradCheckOptions& opts = {}) {
  if (opts.eps < 1e-7 || opts.eps > 1e-3) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
  ParamStore analytic = params.zeros_like();
  const double f0 = f(params, &analytic);
  const double f1 = f(params, nullptr);
  if (f0 != f1) throw std::runtime_error("grad_check: objective is not deterministic");

  struct Element {
    std::string name;
    Eigen::Index index;
  };
  std::vector<Element> all;
  for (const auto& [name, m] : params.entries())
    for (Eigen::Index i = 0; i < m.size(); ++i) all.push_back({name, i});

  std::vector<Element> chosen;
  if (all.size() <= opts.max_elements) {
    chosen = all;
  } else {
    Rng rng(opts.seed);
    std::shuffle(all.begin(), all.end(), rng);
    const std::size_t n = std::max<std::size_t>(opts.subsample, 100);
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(n, all.size())));
  }

  GradCheckReport report;
  ParamStore work = params;
  for (const auto& el : chosen) {
    double* p = work.mut(el.name).data() + el.index;
    const double orig = *p;
    *p = orig + opts.eps;
    const double fp = f(work, nullptr);
    *p = orig - opts.eps;
    const double fm = f(work, nullptr);
    *p = orig;
    const double numeric = (fp - fm) / (2.0 * opts.eps);
    const double a = analytic.get(el.name).data()[el.index];
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = std::max(rel, report.max_rel_error);
      if (rel >= report.max_rel_error) {
        report.worst_param = el.name;
        report.worst_index = el.index;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error < opts.tol;
  return report;
}

}  // namespace ilmt
