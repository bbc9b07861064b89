#include "sgiformer/diagnostics.hpp"

#include "sgiformer/synth.hpp"

namespace sgiformer {

RunConfig tiny_gradcheck_config() {
  RunConfig c;
  c.seed = 3;
  c.model.num_classes = 3;
  c.model.backbone_width = 8;
  c.model.backbone_rounds = 2;
  c.model.width = 8;
  c.model.heads = 2;
  c.model.layers = 2;
  c.model.scene_queries = 2;
  c.model.learnable_queries = 2;
  c.model.fourier_bands = 2;
  // Wider initial queries keep the masks away from the binarisation threshold.
  c.model.query_init_std = 0.5;
  c.data.voxel_size = 0.1;
  c.data.superpoint_threshold = 1.0;
  c.synth.num_classes = 3;
  c.synth.room_min = c.synth.room_max = 0.45;
  c.synth.instances_min = c.synth.instances_max = 2;
  c.synth.points_min = c.synth.points_max = 40;
  c.synth.object_min = 0.1;
  c.synth.object_max = 0.14;
  c.synth.background_density = 150;
  c.synth.wall = false;
  return c;
}

PointCloud tiny_gradcheck_scene(const RunConfig& config, std::uint64_t seed) {
  SceneSpec spec = config.synth;
  spec.seed = seed;
  return generate_scene(spec).cloud;
}

ModelGradCheck check_model_gradients(const RunConfig& config, const PointCloud& scene,
                                     const GradCheckOptions& options) {
  Model model(config.model, config.seed);
  const PreparedScene prepared = prepare_scene(scene, config.data, config.model);
  ModelGradCheck out;
  out.voxels = prepared.grid.size();
  out.superpoints = prepared.partition.size();
  out.queries = config.model.num_queries();
  std::vector<GradCheckTarget> targets;
  for (const auto& p : model.params().params()) {
    targets.push_back({p.name, p.tensor});
    out.parameters += p.tensor.numel();
  }
  out.report = check_gradients(
      [&] { return scene_loss(model.forward(prepared), prepared, config.model, config.loss).total; }, targets,
      options);
  return out;
}

}  // namespace sgiformer
