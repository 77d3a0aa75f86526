#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "featsel/tensor.hpp"

namespace featsel {

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::string note;
};

/// Compares an analytic gradient against central finite differences of a
/// scalar-valued function. Entries where both gradients sit below the
/// finite-difference noise floor are skipped.
inline GradCheckReport grad_check(
    const std::function<double(const Tensor&)>& f,
    const std::function<Tensor(const Tensor&)>& analytic_grad, const Tensor& x,
    double tol, double h = 1e-5) {
  GradCheckReport report;
  Tensor g = analytic_grad(x);
  if (g.numel() != x.numel()) {
    report.note = "analytic gradient has wrong length";
    return report;
  }
  if (!g.all_finite()) {
    report.note = "non-finite analytic gradient";
    return report;
  }
  constexpr double kNoiseFloor = 1e-7;
  double worst = 0.0;
  std::size_t worst_i = 0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double fp = f(probe);
    probe.data[i] = orig - h;
    const double fm = f(probe);
    probe.data[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      report.note = "non-finite intermediate at index " + std::to_string(i);
      return report;
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double a = g.data[i];
    const double scale = std::max(std::abs(a), std::abs(fd));
    if (scale < kNoiseFloor) continue;
    const double rel = std::abs(a - fd) / std::max(scale, 1e-8);
    if (rel > worst) {
      worst = rel;
      worst_i = i;
    }
  }
  report.max_rel_err = worst;
  report.worst_index = worst_i;
  report.pass = worst <= tol;
  return report;
}

}  // namespace featsel
