#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "sgiformer/tensor.hpp"

namespace sgiformer {

struct GradCheckOptions {
  double eps = 1e-5;
  double abs_tol = 1e-6;
  double rel_tol = 1e-3;
  /// Upper bound on checked entries per tensor; 0 checks all of them.
  std::size_t max_entries_per_tensor = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool ok = true;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_abs_error = 0.0;
  /// Relative error of entries that fail the absolute floor.
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> failures;

  bool ok() const { return failed == 0; }
};

struct GradCheckTarget {
  std::string name;
  Tensor tensor;
};

/// Central finite differences against the tape gradient of `loss_fn` for every
/// entry of every target. `loss_fn` must rebuild the graph on each call.
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<GradCheckTarget>& targets,
                                const GradCheckOptions& options = {});

}  // namespace sgiformer
