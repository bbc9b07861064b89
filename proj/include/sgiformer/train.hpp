#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "sgiformer/checkpoint.hpp"
#include "sgiformer/model.hpp"

namespace sgiformer {

struct StepStats {
  std::size_t step = 0;  // 1-based index of the completed step
  double loss = 0.0;     // mean over the batch
  double semantic = 0.0;
  double geometric = 0.0;
  double final_bce = 0.0;
  double final_dice = 0.0;
  double final_cls = 0.0;
  std::vector<LayerLoss> layers;  // batch means, prediction 0 first
  double lr = 0.0;
};

/// Owns the model, the optimizer and the data order. Sample k (k = step * batch + b)
/// is taken from a per-epoch permutation seeded by the run seed; augmentation draws
/// its own seed from the run seed and k, so resumed runs replay the same stream.
class Trainer {
 public:
  Trainer(RunConfig config, std::vector<PointCloud> scenes);
  /// Resumes parameters, moments and the step counter from `checkpoint`.
  Trainer(const Checkpoint& checkpoint, RunConfig config, std::vector<PointCloud> scenes);

  StepStats train_step();
  std::size_t steps_done() const { return steps_done_; }
  bool finished() const { return steps_done_ >= config_.train.steps; }

  const RunConfig& config() const { return config_; }
  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  const AdamW& optimizer() const { return optimizer_; }

  void save(const std::filesystem::path& path) const;

 private:
  std::size_t scene_index(std::uint64_t sample);
  PreparedScene prepared(std::uint64_t sample);

  RunConfig config_;
  std::vector<PointCloud> scenes_;
  std::unique_ptr<Model> model_;
  AdamW optimizer_;
  std::size_t steps_done_ = 0;
  std::vector<std::optional<PreparedScene>> cache_;
  std::uint64_t order_epoch_ = ~0ull;
  std::vector<std::size_t> order_;
};

AdamWConfig optimizer_config(const TrainConfig& train);

}  // namespace sgiformer
