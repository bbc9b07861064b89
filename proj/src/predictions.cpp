#include "sgiformer/predictions.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "sgiformer/scene_io.hpp"

namespace sgiformer {

namespace {

constexpr const char* kFormat = "sgiformer-predictions";
constexpr int kVersion = 1;

using json = nlohmann::ordered_json;

}  // namespace

PredictionDump predict_scene(const Model& model, const PointCloud& cloud, const DataConfig& data,
                             const InferenceConfig& inference, const std::string& name, bool all_layers) {
  const std::size_t c = model.config().num_classes;
  const PreparedScene prepared = prepare_scene(cloud, data, model.config());
  const ForwardResult f = model.forward(prepared);
  const auto& preds = f.decoded.predictions;
  PredictionDump d{name, prepared.cloud.size(), c, {}};
  for (std::size_t l = all_layers ? 0 : preds.size() - 1; l < preds.size(); ++l)
    d.layers.push_back(dump_layer(l, postprocess(preds[l], prepared, inference, c)));
  return d;
}

DumpedLayer dump_layer(std::size_t layer, const std::vector<InstancePrediction>& predictions) {
  DumpedLayer out;
  out.layer = layer;
  for (const auto& p : predictions) {
    DumpedInstance inst{p.query, p.label, p.score, {}};
    for (std::size_t i = 0; i < p.point_mask.size(); ++i)
      if (p.point_mask[i]) inst.points.push_back(i);
    out.instances.push_back(std::move(inst));
  }
  return out;
}

std::string predictions_to_json(const PredictionDump& dump) {
  json layers = json::array();
  for (const auto& l : dump.layers) {
    json instances = json::array();
    for (const auto& inst : l.instances) {
      instances.push_back(
          {{"query", inst.query}, {"label", inst.label}, {"score", inst.score}, {"points", inst.points}});
    }
    layers.push_back({{"layer", l.layer}, {"instances", std::move(instances)}});
  }
  json j = {{"format", kFormat},
            {"version", kVersion},
            {"scene", dump.scene},
            {"num_points", dump.num_points},
            {"num_classes", dump.num_classes},
            {"layers", std::move(layers)}};
  return j.dump() + "\n";
}

PredictionDump parse_predictions(const std::string& text) {
  PredictionDump d;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != kFormat) throw ParseError("not a prediction dump");
    if (j.at("version").get<int>() != kVersion) throw ParseError("unsupported prediction dump version");
    d.scene = j.at("scene").get<std::string>();
    d.num_points = j.at("num_points").get<std::size_t>();
    d.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      DumpedLayer layer;
      layer.layer = l.at("layer").get<std::size_t>();
      for (const auto& i : l.at("instances")) {
        DumpedInstance inst;
        inst.query = i.at("query").get<std::size_t>();
        inst.label = i.at("label").get<int>();
        inst.score = i.at("score").get<double>();
        inst.points = i.at("points").get<std::vector<std::size_t>>();
        if (inst.label < 1 || static_cast<std::size_t>(inst.label) > d.num_classes)
          throw ParseError("instance label " + std::to_string(inst.label) + " out of range");
        for (std::size_t k = 0; k < inst.points.size(); ++k) {
          if (inst.points[k] >= d.num_points) throw ParseError("point index out of range");
          if (k > 0 && inst.points[k] <= inst.points[k - 1]) throw ParseError("point indices must be increasing");
        }
        layer.instances.push_back(std::move(inst));
      }
      d.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("prediction dump: ") + e.what());
  }
  return d;
}

void write_predictions(const std::filesystem::path& path, const PredictionDump& dump) {
  write_file_atomic(path, predictions_to_json(dump));
}

PredictionDump read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_predictions(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

SceneEvalInput to_eval_input(const DumpedLayer& layer, const PointCloud& cloud) {
  SceneEvalInput in;
  for (const auto& inst : layer.instances) {
    std::vector<std::uint8_t> mask(cloud.size(), 0);
    for (auto p : inst.points) {
      if (p >= cloud.size()) throw std::invalid_argument("to_eval_input: dump does not match the cloud");
      mask[p] = 1;
    }
    in.predictions.push_back({std::move(mask), inst.label, inst.score});
  }
  for (auto& g : point_ground_truth(cloud)) in.ground_truth.push_back({std::move(g.point_mask), g.label});
  return in;
}

std::vector<int> point_instance_ids(const DumpedLayer& layer, std::size_t num_points) {
  std::vector<int> ids(num_points, 0);
  for (std::size_t r = layer.instances.size(); r-- > 0;) {
    for (auto p : layer.instances[r].points)
      if (p < num_points) ids[p] = static_cast<int>(r) + 1;
  }
  return ids;
}

}  // namespace sgiformer
