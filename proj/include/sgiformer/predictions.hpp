#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sgiformer/metrics.hpp"
#include "sgiformer/model.hpp"
#include "sgiformer/scene_io.hpp"

namespace sgiformer {

struct DumpedInstance {
  std::size_t query = 0;
  int label = 1;
  double score = 0.0;
  std::vector<std::size_t> points;  // sorted point indices
};

struct DumpedLayer {
  std::size_t layer = 0;
  std::vector<DumpedInstance> instances;  // score-descending
};

/// Inference output for one scene, JSON schema in docs/formats.md.
struct PredictionDump {
  std::string scene;
  std::size_t num_points = 0;
  std::size_t num_classes = 0;
  std::vector<DumpedLayer> layers;  // the final decoder layer is last
};

/// Runs the model on one cloud and post-processes the final decoder layer, or
/// every prediction layer when `all_layers` is set.
PredictionDump predict_scene(const Model& model, const PointCloud& cloud, const DataConfig& data,
                             const InferenceConfig& inference, const std::string& name, bool all_layers = false);

DumpedLayer dump_layer(std::size_t layer, const std::vector<InstancePrediction>& predictions);

std::string predictions_to_json(const PredictionDump& dump);
/// Throws ParseError on schema violations (wrong format tag, indices out of range...).
PredictionDump parse_predictions(const std::string& text);
void write_predictions(const std::filesystem::path& path, const PredictionDump& dump);
PredictionDump read_predictions(const std::filesystem::path& path);

/// Evaluation input from a dumped layer plus the labelled cloud it came from.
SceneEvalInput to_eval_input(const DumpedLayer& layer, const PointCloud& cloud);

/// Per-point instance ids for PLY export: each point takes the 1-based rank of
/// the highest-scoring instance covering it, 0 if none does.
std::vector<int> point_instance_ids(const DumpedLayer& layer, std::size_t num_points);

}  // namespace sgiformer
