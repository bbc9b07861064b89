#include "sgiformer/smq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sgiformer {

std::size_t selection_count(std::size_t m, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("selection alpha must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(m) - 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(m, 1));
}

Selection select_voxels(const Tensor& semantic_logits, double alpha) {
  if (semantic_logits.rank() != 2 || semantic_logits.cols() < 2 || semantic_logits.rows() == 0) {
    throw ShapeError("select_voxels: need m x (c+1) logits with m >= 1, c >= 1, got " +
                     shape_str(semantic_logits.shape()));
  }
  const std::size_t m = semantic_logits.rows();
  const std::size_t k = semantic_logits.cols();
  std::vector<double> score(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = semantic_logits.at(i, 0);
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, semantic_logits.at(i, c));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(semantic_logits.at(i, c) - mx);
    double best = 0.0;
    for (std::size_t c = 0; c + 1 < k; ++c) best = std::max(best, std::exp(semantic_logits.at(i, c) - mx) / z);
    score[i] = best;
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t count = selection_count(m, alpha);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) { return score[a] != score[b] ? score[a] > score[b] : a < b; });
  Selection sel;
  sel.index.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  for (auto i : sel.index) sel.scores.push_back(score[i]);
  return sel;
}

SmqParams SmqParams::create(ParamStore& store, const ModelConfig& cfg) {
  SmqParams p;
  if (cfg.scene_queries > 0) {
    p.projection = Linear::create(store, "smq.projection", cfg.backbone_width, cfg.width);
    p.psi = Linear::create(store, "smq.psi", cfg.width, cfg.scene_queries);
  }
  if (cfg.learnable_queries > 0) {
    p.learnable = store.add_normal("smq.learnable_queries", {cfg.learnable_queries, cfg.width}, cfg.query_init_std);
  }
  return p;
}

SceneQueries init_scene_queries(const Tensor& features, const Selection& selection, const Linear& projection,
                                const Linear& psi) {
  if (selection.index.empty()) throw std::invalid_argument("init_scene_queries: empty selection");
  if (features.rank() != 2 || features.cols() != projection.in_features()) {
    throw ShapeError("init_scene_queries: features " + shape_str(features.shape()) + " vs projection input " +
                     std::to_string(projection.in_features()));
  }
  for (auto i : selection.index) {
    if (i >= features.rows()) throw std::out_of_range("init_scene_queries: selected voxel out of range");
  }
  SceneQueries out;
  // Row-wise projection commutes with the gather.
  out.selected = projection(gather_rows(features, selection.index));
  out.weights = softmax_rows(transpose(relu(psi(out.selected))));
  out.queries = matmul(out.weights, out.selected);
  return out;
}

QuerySet mix_queries(const std::optional<Tensor>& scene, const std::optional<Tensor>& learnable) {
  if (!scene && !learnable) throw std::invalid_argument("mix_queries: no queries");
  if (scene && learnable && scene->cols() != learnable->cols()) {
    throw ShapeError("mix_queries: scene queries " + shape_str(scene->shape()) + " vs learnable " +
                     shape_str(learnable->shape()));
  }
  QuerySet q;
  q.scene_count = scene ? scene->rows() : 0;
  q.learnable_count = learnable ? learnable->rows() : 0;
  q.provenance.assign(q.scene_count, QuerySource::kScene);
  q.provenance.insert(q.provenance.end(), q.learnable_count, QuerySource::kLearnable);
  if (scene && learnable) {
    q.queries = concat_rows({*scene, *learnable});
  } else {
    q.queries = scene ? *scene : *learnable;
  }
  return q;
}

}  // namespace sgiformer
