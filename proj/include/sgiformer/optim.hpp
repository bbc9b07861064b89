#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sgiformer/nn.hpp"

namespace sgiformer {

/// base * (1 - step/total)^power, clamped at zero once step >= total.
class PolySchedule {
 public:
  PolySchedule(std::size_t total_steps, double power) : total_(total_steps), power_(power) {}
  double factor(std::size_t step) const;

 private:
  std::size_t total_;
  double power_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double voxel_head_lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double poly_power = 0.9;
  std::size_t total_steps = 1;
};

/// Per-parameter moments plus the step counter; laid out parallel to ParamStore::params().
struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

/// Decoupled weight-decay Adam. Parameters without a gradient this step are skipped.
class AdamW {
 public:
  AdamW(AdamWConfig config, const ParamStore& params);

  /// Learning rate for `group` at the current step.
  double learning_rate(ParamGroup group) const;
  /// Applies one update and increments the step counter.
  /// Throws std::logic_error when no parameter carries a gradient.
  void step(ParamStore& params);

  const AdamWConfig& config() const { return config_; }
  const OptimizerState& state() const { return state_; }
  OptimizerState& state() { return state_; }

 private:
  AdamWConfig config_;
  PolySchedule schedule_;
  OptimizerState state_;
};

}  // namespace sgiformer
