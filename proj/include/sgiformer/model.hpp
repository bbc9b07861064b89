#pragma once

#include <optional>
#include <vector>

#include "sgiformer/backbone.hpp"
#include "sgiformer/config.hpp"
#include "sgiformer/decoder.hpp"
#include "sgiformer/matching.hpp"
#include "sgiformer/metrics.hpp"
#include "sgiformer/smq.hpp"

namespace sgiformer {

/// Everything derived from a cloud before any parameter is touched.
struct PreparedScene {
  PointCloud cloud;
  VoxelGrid grid;
  std::vector<std::vector<std::size_t>> adjacency;
  SuperpointPartition partition;
  Tensor voxel_coords;  // m x 3, constant
  Bounds bounds;        // of the voxel coordinates
  std::vector<GroundTruthInstance> targets;  // superpoint-level training targets
};

PreparedScene prepare_scene(PointCloud cloud, const DataConfig& data, const ModelConfig& model);

struct ForwardResult {
  BackboneOutput backbone;
  Tensor refined_coords;
  Selection selection;
  std::optional<SceneQueries> scene_queries;
  QuerySet queries;
  SceneState scene;
  DecodeResult decoded;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const BackboneParams& backbone() const { return backbone_; }
  const SmqParams& smq() const { return smq_; }
  const DecoderParams& decoder() const { return decoder_; }

  ForwardResult forward(const PreparedScene& scene) const;

 private:
  ModelConfig config_;
  ParamStore store_;
  BackboneParams backbone_;
  SmqParams smq_;
  DecoderParams decoder_;
};

/// Full training objective for one scene.
LossBreakdown scene_loss(const ForwardResult& forward, const PreparedScene& scene, const ModelConfig& model,
                         const LossConfig& loss);

struct InstancePrediction {
  std::size_t query = 0;
  int label = 1;
  double score = 0.0;
  std::vector<std::uint8_t> superpoint_mask;
  std::vector<std::uint8_t> point_mask;
};

/// Final-layer instances: label = most probable foreground class, score = that
/// probability times the mean soft mask over the binary support. Masks with
/// fewer than `min_points` points are dropped; the best `top_k` remain, sorted.
std::vector<InstancePrediction> postprocess(const LayerPrediction& prediction, const PreparedScene& scene,
                                            const InferenceConfig& cfg, std::size_t num_classes);

/// Inference on a batch of scenes followed by evaluation against point-level
/// ground truth. Scenes are processed in order; results are deterministic.
struct ModelEvaluation {
  EvalReport report;
  std::vector<std::vector<InstancePrediction>> predictions;
};
ModelEvaluation evaluate_model(const Model& model, const std::vector<PointCloud>& scenes, const DataConfig& data,
                               const InferenceConfig& inference);

SceneEvalInput to_eval_input(const std::vector<InstancePrediction>& predictions, const PointCloud& cloud);

}  // namespace sgiformer
