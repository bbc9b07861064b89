#include "sgiformer/train.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

#include "sgiformer/synth.hpp"

namespace sgiformer {

AdamWConfig optimizer_config(const TrainConfig& train) {
  AdamWConfig c;
  c.lr = train.lr;
  c.voxel_head_lr = train.voxel_head_lr;
  c.weight_decay = train.weight_decay;
  c.poly_power = train.poly_power;
  c.total_steps = train.steps;
  return c;
}

Trainer::Trainer(RunConfig config, std::vector<PointCloud> scenes)
    : config_(std::move(config)),
      scenes_(std::move(scenes)),
      model_(std::make_unique<Model>(config_.model, config_.seed)),
      optimizer_(optimizer_config(config_.train), model_->params()) {
  config_.validate();
  if (scenes_.empty()) throw std::invalid_argument("Trainer: no training scenes");
  for (const auto& s : scenes_) {
    if (!s.has_labels()) throw std::invalid_argument("Trainer: training scenes need labels");
  }
  cache_.resize(scenes_.size());
}

Trainer::Trainer(const Checkpoint& checkpoint, RunConfig config, std::vector<PointCloud> scenes)
    : Trainer(std::move(config), std::move(scenes)) {
  if (model_hash(config_.model) != checkpoint.config_hash) {
    throw CheckpointError("checkpoint model settings differ from the run configuration");
  }
  restore_params(checkpoint, model_->params());
  if (checkpoint.optimizer) optimizer_.state() = *checkpoint.optimizer;
  steps_done_ = checkpoint.step;
}

std::size_t Trainer::scene_index(std::uint64_t sample) {
  const std::uint64_t epoch = sample / scenes_.size();
  if (epoch != order_epoch_) {
    order_.resize(scenes_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(config_.seed, epoch));
    std::shuffle(order_.begin(), order_.end(), rng);
    order_epoch_ = epoch;
  }
  return order_[sample % scenes_.size()];
}

PreparedScene Trainer::prepared(std::uint64_t sample) {
  const std::size_t idx = scene_index(sample);
  if (config_.train.augment.any()) {
    return prepare_scene(augment(scenes_[idx], config_.train.augment, mix_seed(config_.seed, sample)), config_.data,
                         config_.model);
  }
  if (!cache_[idx]) cache_[idx] = prepare_scene(scenes_[idx], config_.data, config_.model);
  return *cache_[idx];
}

StepStats Trainer::train_step() {
  if (finished()) throw std::logic_error("Trainer: all configured steps are done");
  const std::size_t batch = config_.train.batch_scenes;
  auto& store = model_->params();
  store.zero_grad();
  StepStats stats;
  stats.lr = optimizer_.learning_rate(ParamGroup::kDefault);
  const double weight = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint64_t sample = static_cast<std::uint64_t>(steps_done_) * batch + b;
    const PreparedScene scene = prepared(sample);
    const ForwardResult f = model_->forward(scene);
    LossBreakdown loss = scene_loss(f, scene, config_.model, config_.loss);
    backward(scale(loss.total, weight));
    stats.loss += loss.total.item() * weight;
    stats.semantic += loss.semantic * weight;
    stats.geometric += loss.geometric * weight;
    stats.final_cls += loss.layers.back().cls * weight;
    stats.final_bce += loss.layers.back().bce * weight;
    stats.final_dice += loss.layers.back().dice * weight;
    stats.layers.resize(loss.layers.size());
    for (std::size_t l = 0; l < loss.layers.size(); ++l) {
      stats.layers[l].cls += loss.layers[l].cls * weight;
      stats.layers[l].bce += loss.layers[l].bce * weight;
      stats.layers[l].dice += loss.layers[l].dice * weight;
    }
  }
  optimizer_.step(store);
  stats.step = ++steps_done_;
  return stats;
}

void Trainer::save(const std::filesystem::path& path) const {
  save_checkpoint(path, config_, model_->params(), &optimizer_.state(), steps_done_);
}

}  // namespace sgiformer
