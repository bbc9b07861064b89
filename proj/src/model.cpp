#include "sgiformer/model.hpp"

#include <algorithm>

namespace sgiformer {

PreparedScene prepare_scene(PointCloud cloud, const DataConfig& data, const ModelConfig& model) {
  cloud.validate(static_cast<int>(model.num_classes));
  PreparedScene s;
  s.grid = voxelize(cloud, data.voxel_size);
  s.adjacency = voxel_adjacency(s.grid, model.neighborhood);
  s.partition = segment_superpoints(s.grid, data.superpoint_k, data.superpoint_threshold);
  s.voxel_coords = s.grid.coords_tensor();
  s.bounds = bounds_of(s.grid.coords);
  s.targets = superpoint_ground_truth(cloud, s.grid, s.partition);
  s.cloud = std::move(cloud);
  return s;
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      store_(seed),
      backbone_(BackboneParams::create(store_, config_)),
      smq_(SmqParams::create(store_, config_)),
      decoder_(DecoderParams::create(store_, config_)) {}

ForwardResult Model::forward(const PreparedScene& scene) const {
  ForwardResult r;
  r.backbone = run_backbone(scene.grid, scene.adjacency, backbone_);
  r.refined_coords = config_.use_bias_refinement ? refine_coords(scene.voxel_coords, r.backbone.offsets)
                                                 : scene.voxel_coords;

  std::optional<Tensor> scene_part;
  if (config_.scene_queries > 0) {
    r.selection = select_voxels(r.backbone.semantic_logits, config_.alpha);
    r.scene_queries = init_scene_queries(r.backbone.features, r.selection, smq_.projection, smq_.psi);
    scene_part = r.scene_queries->queries;
  }
  r.queries = mix_queries(scene_part, smq_.learnable);
  r.scene = build_scene_state(r.backbone.features, r.refined_coords, scene.partition, scene.bounds, config_, decoder_);
  r.decoded = decode(r.queries, r.scene, config_, decoder_);
  return r;
}

LossBreakdown scene_loss(const ForwardResult& f, const PreparedScene& scene, const ModelConfig& model,
                         const LossConfig& loss) {
  if (!scene.cloud.has_labels()) throw std::invalid_argument("scene_loss: scene has no labels");
  const Tensor sem = semantic_loss(f.backbone.semantic_logits, scene.grid.semantic);
  const Tensor geo = model.use_bias_refinement
                         ? geometric_loss(f.backbone.offsets, scene.voxel_coords, scene.grid.centers,
                                          scene.grid.center_valid)
                         : Tensor::scalar(0.0);
  return total_loss(f.decoded.predictions, scene.targets, sem, geo, loss, model.num_classes);
}

std::vector<InstancePrediction> postprocess(const LayerPrediction& pred, const PreparedScene& scene,
                                            const InferenceConfig& cfg, std::size_t num_classes) {
  const std::size_t q = pred.num_queries();
  const std::size_t ns = pred.num_superpoints();
  const auto sp_of_point = point_superpoints(scene.partition, scene.grid);
  std::vector<InstancePrediction> out;
  for (std::size_t i = 0; i < q; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (pred.class_probs.at(i, c) > pred.class_probs.at(i, best)) best = c;
    if (cfg.drop_background && pred.class_probs.at(i, num_classes) > pred.class_probs.at(i, best)) continue;
    InstancePrediction inst;
    inst.query = i;
    inst.label = static_cast<int>(best) + 1;
    inst.superpoint_mask.assign(ns, 0);
    double soft_sum = 0.0;
    std::size_t support = 0;
    for (std::size_t s = 0; s < ns; ++s) {
      if (!pred.binary(i, s)) continue;
      inst.superpoint_mask[s] = 1;
      soft_sum += pred.soft_masks.at(i, s);
      ++support;
    }
    if (support == 0) continue;
    inst.point_mask.assign(sp_of_point.size(), 0);
    std::size_t points = 0;
    for (std::size_t p = 0; p < sp_of_point.size(); ++p) {
      if (inst.superpoint_mask[sp_of_point[p]]) {
        inst.point_mask[p] = 1;
        ++points;
      }
    }
    if (points < std::max<std::size_t>(cfg.min_points, 1)) continue;
    inst.score = pred.class_probs.at(i, best) * soft_sum / static_cast<double>(support);
    out.push_back(std::move(inst));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const InstancePrediction& a, const InstancePrediction& b) { return a.score > b.score; });
  if (out.size() > cfg.top_k) out.resize(cfg.top_k);
  return out;
}

SceneEvalInput to_eval_input(const std::vector<InstancePrediction>& predictions, const PointCloud& cloud) {
  SceneEvalInput in;
  for (const auto& p : predictions) in.predictions.push_back({p.point_mask, p.label, p.score});
  for (auto& g : point_ground_truth(cloud)) in.ground_truth.push_back({std::move(g.point_mask), g.label});
  return in;
}

ModelEvaluation evaluate_model(const Model& model, const std::vector<PointCloud>& scenes, const DataConfig& data,
                               const InferenceConfig& inference) {
  NoGradGuard no_grad;
  ModelEvaluation ev;
  std::vector<SceneEvalInput> inputs;
  for (const auto& cloud : scenes) {
    const PreparedScene prepared = prepare_scene(cloud, data, model.config());
    const ForwardResult f = model.forward(prepared);
    auto preds = postprocess(f.decoded.predictions.back(), prepared, inference, model.config().num_classes);
    inputs.push_back(to_eval_input(preds, prepared.cloud));
    ev.predictions.push_back(std::move(preds));
  }
  ev.report = evaluate(inputs);
  return ev;
}

}  // namespace sgiformer
