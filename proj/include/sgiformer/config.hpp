#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "sgiformer/pointcloud.hpp"

namespace sgiformer {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t num_classes = 4;
  std::size_t backbone_width = 32;
  std::size_t backbone_rounds = 3;
  Neighborhood neighborhood = Neighborhood::k26;
  std::size_t width = 32;
  std::size_t heads = 4;
  std::size_t layers = 3;
  std::size_t scene_queries = 8;
  std::size_t learnable_queries = 8;
  double alpha = 0.4;
  double mask_threshold = 0.5;
  std::size_t fourier_bands = 6;
  double query_init_std = 0.02;
  bool use_positional_encoding = true;
  bool use_scene_update = true;
  bool use_bias_refinement = true;
  /// Mask features see F_s + E_s rather than F_s alone; needs the positional encoding.
  bool positional_mask_features = true;

  std::size_t num_queries() const { return scene_queries + learnable_queries; }
};

struct LossConfig {
  double cls = 0.8;
  double bce = 1.0;
  double dice = 1.0;
  double aux = 0.4;
  double dice_smooth = 1.0;
};

struct DataConfig {
  std::string dataset;
  double voxel_size = 0.02;
  std::size_t superpoint_k = 8;
  double superpoint_threshold = 3.0;
};

struct AugmentConfig {
  bool flip = false;
  bool rotate_z = false;
  bool translate = false;
  bool scale = false;
  double max_translation = 0.1;
  double scale_min = 0.9;
  double scale_max = 1.1;

  bool any() const { return flip || rotate_z || translate || scale; }
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_scenes = 1;
  double lr = 1e-3;
  double voxel_head_lr = 3e-3;
  double weight_decay = 0.05;
  double poly_power = 0.9;
  std::size_t log_every = 10;
  std::size_t eval_every = 0;
  std::size_t checkpoint_every = 0;
  AugmentConfig augment;
};

struct InferenceConfig {
  std::size_t top_k = 100;
  std::size_t min_points = 1;
  /// Drop queries whose most probable class is the no-object class.
  bool drop_background = false;
};

/// Parameters of the procedural scene generator.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t num_classes = 4;
  double room_min = 0.8;
  double room_max = 1.2;
  std::size_t instances_min = 3;
  std::size_t instances_max = 6;
  std::size_t points_min = 150;
  std::size_t points_max = 400;
  double object_min = 0.08;
  double object_max = 0.2;
  double noise = 0.002;
  double background_density = 1500.0;
  bool wall = true;
  double adjacent_pair_prob = 0.5;
  std::size_t max_retries = 200;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  LossConfig loss;
  DataConfig data;
  TrainConfig train;
  InferenceConfig inference;
  SceneSpec synth;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

/// Parses JSON (comments allowed). Missing keys keep their defaults; unknown keys
/// and wrongly typed values raise ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& config);
/// Canonical JSON of the model section, used for checkpoint compatibility.
std::string model_config_json(const ModelConfig& model);
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace sgiformer
