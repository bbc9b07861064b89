#pragma once

#include <optional>
#include <vector>

#include "sgiformer/config.hpp"
#include "sgiformer/nn.hpp"

namespace sgiformer {

struct Selection {
  std::vector<std::size_t> index;
  /// Foreground confidence of each selected voxel, non-increasing.
  std::vector<double> scores;
};

/// ceil(alpha * m), at least 1.
std::size_t selection_count(std::size_t m, double alpha);

/// Voxels ranked by their largest foreground class probability (background
/// column dropped after the softmax). Ties go to the lower voxel index.
/// Routing only: nothing here is differentiable.
Selection select_voxels(const Tensor& semantic_logits, double alpha);

struct SmqParams {
  Linear projection;  // F -> F'
  Linear psi;         // d -> q_s, followed by ReLU
  std::optional<Tensor> learnable;  // q_l x d

  static SmqParams create(ParamStore& store, const ModelConfig& cfg);
};

struct SceneQueries {
  Tensor queries;      // q_s x d
  Tensor weights;      // q_s x |selection|, rows sum to one
  Tensor selected;     // |selection| x d, projected features f
};

SceneQueries init_scene_queries(const Tensor& features, const Selection& selection, const Linear& projection,
                                const Linear& psi);

enum class QuerySource { kScene, kLearnable };

struct QuerySet {
  Tensor queries;
  std::size_t scene_count = 0;
  std::size_t learnable_count = 0;
  std::vector<QuerySource> provenance;

  std::size_t size() const { return scene_count + learnable_count; }
};

/// Row concatenation [scene; learnable]. Either part may be absent, not both.
QuerySet mix_queries(const std::optional<Tensor>& scene, const std::optional<Tensor>& learnable);

}  // namespace sgiformer
