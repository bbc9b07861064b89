#include "sgiformer/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sgiformer {

double PolySchedule::factor(std::size_t step) const {
  if (total_ == 0 || step >= total_) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_);
  return std::pow(frac, power_);
}

AdamW::AdamW(AdamWConfig config, const ParamStore& params)
    : config_(config), schedule_(config.total_steps, config.poly_power) {
  for (const auto& p : params.params()) {
    state_.first_moment.emplace_back(p.tensor.numel(), 0.0);
    state_.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
}

double AdamW::learning_rate(ParamGroup group) const {
  const double base = group == ParamGroup::kVoxelHead ? config_.voxel_head_lr : config_.lr;
  return base * schedule_.factor(static_cast<std::size_t>(state_.step));
}

void AdamW::step(ParamStore& params) {
  auto& list = params.params();
  if (list.size() != state_.first_moment.size()) {
    throw std::logic_error("AdamW: parameter list changed since construction");
  }
  bool any = false;
  for (const auto& p : list) any = any || !p.tensor.grad().empty();
  if (!any) throw std::logic_error("AdamW: no parameter has a gradient");

  const std::uint64_t t = state_.step + 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto& p = list[i];
    auto grad = p.tensor.grad();
    if (grad.empty()) continue;
    const double lr = learning_rate(p.group);
    auto value = p.tensor.mutable_data();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      value[j] -= lr * config_.weight_decay * value[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * grad[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * grad[j] * grad[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  state_.step = t;
}

}  // namespace sgiformer
