#include "sgiformer/backbone.hpp"

#include <stdexcept>
#include <string>

namespace sgiformer {

BackboneParams BackboneParams::create(ParamStore& store, const ModelConfig& cfg) {
  const std::size_t d = cfg.backbone_width;
  BackboneParams p;
  p.input = Mlp::create(store, "backbone.input", {6, d, d});
  for (std::size_t k = 0; k < cfg.backbone_rounds; ++k) {
    p.rounds.push_back(Linear::create(store, "backbone.round" + std::to_string(k), d, d));
  }
  p.semantic_head = Mlp::create(store, "semantic_head", {d, d, cfg.num_classes + 1}, ParamGroup::kVoxelHead);
  p.offset_head = Mlp::create(store, "offset_head", {d, d, 3}, ParamGroup::kVoxelHead);
  return p;
}

Tensor backbone_input(const VoxelGrid& grid) {
  const Bounds b = bounds_of(grid.coords);
  std::vector<double> v;
  v.reserve(grid.size() * 6);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec3 n = b.normalize(grid.coords[i]);
    v.insert(v.end(), n.begin(), n.end());
    v.insert(v.end(), grid.colors[i].begin(), grid.colors[i].end());
  }
  return Tensor::from({grid.size(), 6}, std::move(v));
}

Tensor extract_features(const Tensor& input, const std::vector<std::vector<std::size_t>>& adjacency,
                        const BackboneParams& params) {
  if (input.rank() != 2 || input.rows() != adjacency.size()) {
    throw ShapeError("extract_features: input " + shape_str(input.shape()) + " vs " +
                     std::to_string(adjacency.size()) + " adjacency lists");
  }
  Tensor h = params.input(input);
  for (const auto& layer : params.rounds) h = h + relu(layer(segment_mean(h, adjacency)));
  return h;
}

BackboneOutput run_backbone(const VoxelGrid& grid, const std::vector<std::vector<std::size_t>>& adjacency,
                            const BackboneParams& params) {
  BackboneOutput out;
  out.features = extract_features(backbone_input(grid), adjacency, params);
  out.semantic_logits = params.semantic_head(out.features);
  out.offsets = params.offset_head(out.features);
  return out;
}

Tensor semantic_loss(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw ShapeError("semantic_loss: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || static_cast<std::size_t>(labels[i]) > logits.cols()) {
      throw std::invalid_argument("semantic_loss: label " + std::to_string(labels[i]) + " outside 1.." +
                                  std::to_string(logits.cols()));
    }
    targets[i] = static_cast<std::size_t>(labels[i] - 1);
  }
  return cross_entropy(logits, targets);
}

Tensor geometric_loss(const Tensor& offsets, const Tensor& coords, const std::vector<Vec3>& centers,
                      const std::vector<std::uint8_t>& valid) {
  const std::size_t m = offsets.rows();
  if (offsets.shape() != Shape{m, 3} || coords.shape() != offsets.shape() || centers.size() != m ||
      valid.size() != m) {
    throw ShapeError("geometric_loss: offsets " + shape_str(offsets.shape()) + ", coords " +
                     shape_str(coords.shape()) + ", " + std::to_string(centers.size()) + " centers");
  }
  std::vector<std::size_t> rows;
  std::vector<double> target;
  for (std::size_t i = 0; i < m; ++i) {
    if (!valid[i]) continue;
    rows.push_back(i);
    for (std::size_t a = 0; a < 3; ++a) target.push_back(centers[i][a] - coords.at(i, a));
  }
  if (rows.empty()) return Tensor::scalar(0.0);
  auto diff = gather_rows(offsets, rows) - Tensor::from({rows.size(), 3}, std::move(target));
  return scale(sum(abs(diff)), 1.0 / static_cast<double>(rows.size()));
}

Tensor refine_coords(const Tensor& coords, const Tensor& offsets) {
  if (coords.shape() != offsets.shape()) {
    throw ShapeError("refine_coords: coords " + shape_str(coords.shape()) + " vs offsets " +
                     shape_str(offsets.shape()));
  }
  return coords.detach() + offsets;
}

}  // namespace sgiformer
