#include "sgiformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace sgiformer {

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<GradCheckTarget>& targets,
                                const GradCheckOptions& options) {
  for (const auto& t : targets) {
    Tensor handle = t.tensor;
    handle.zero_grad();
  }
  backward(loss_fn());

  std::vector<std::vector<double>> analytic;
  for (const auto& t : targets) {
    auto g = t.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.tensor.numel(), 0.0);
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Tensor tensor = targets[ti].tensor;
    auto values = tensor.mutable_data();
    std::size_t count = values.size();
    std::size_t stride = 1;
    if (options.max_entries_per_tensor > 0 && count > options.max_entries_per_tensor) {
      stride = (count + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < count; i += stride) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      const double plus = loss_fn().item();
      values[i] = saved - options.eps;
      const double minus = loss_fn().item();
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[ti][i];
      const double err = std::abs(a - numeric);
      const double rel = err / std::max({std::abs(a), std::abs(numeric), 1e-300});
      const bool ok = err <= options.abs_tol || rel <= options.rel_tol;
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, err);
      if (err > options.abs_tol) report.max_rel_error = std::max(report.max_rel_error, rel);
      if (!ok) {
        ++report.failed;
        report.failures.push_back({targets[ti].name, i, a, numeric, false});
      }
    }
  }
  return report;
}

}  // namespace sgiformer
