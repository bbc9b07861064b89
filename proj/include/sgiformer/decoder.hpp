#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sgiformer/config.hpp"
#include "sgiformer/nn.hpp"
#include "sgiformer/pointcloud.hpp"
#include "sgiformer/smq.hpp"

namespace sgiformer {

/// Superpoint-level decoder inputs.
struct SceneState {
  Tensor features;       // F_s, n_s x d
  Tensor coords;         // pooled refined coordinates, n_s x 3
  std::optional<Tensor> positional;  // E_s, n_s x d (absent when disabled)
  Tensor mask_features;  // F_mask, n_s x d

  std::size_t size() const { return features.rows(); }
};

/// [sin(2^b pi x), cos(2^b pi x)] for b < bands, per axis, with x normalized by
/// `bounds` (a degenerate axis maps to 0.5). Output is n x (6 * bands); column
/// layout is axis-major, then band, then (sin, cos).
Tensor fourier_features(const Tensor& coords, const Bounds& bounds, std::size_t bands);

/// 0 where soft >= tau, -inf elsewhere; a row masked everywhere is reset to zeros.
Tensor attention_mask(const Tensor& soft_masks, double tau);

struct QueryRefineParams {
  LayerNorm cross_norm;
  MultiHeadAttention cross;
  LayerNorm self_norm;
  MultiHeadAttention self;
  LayerNorm ffn_norm;
  Mlp ffn;
};

struct SceneUpdateParams {
  LayerNorm attn_norm;
  MultiHeadAttention attn;
  LayerNorm ffn_norm;
  Mlp ffn;
};

struct DecoderLayerParams {
  QueryRefineParams refine;
  std::optional<SceneUpdateParams> update;
};

struct PredictionHead {
  LayerNorm norm;
  Linear mask_embed;  // phi_m after the norm
  Mlp classifier;     // phi_cls
};

struct DecoderParams {
  Linear scene_proj;     // phi_s
  Linear mask_proj;      // F_mask from the initial superpoint features (plus E_s if enabled)
  std::optional<Linear> positional_proj;  // phi_E
  PredictionHead head;
  std::vector<DecoderLayerParams> layers;

  static DecoderParams create(ParamStore& store, const ModelConfig& cfg);
};

struct QueryRefineResult {
  Tensor queries;
  std::vector<Tensor> cross_weights;  // per head, q x n_s
};

/// Masked cross-attention to `scene_tokens` (F_s + E_s), self-attention, feed-forward;
/// pre-norm residual sub-blocks.
QueryRefineResult query_refine_block(const Tensor& queries, const Tensor& scene_tokens, const Tensor& mask,
                                     const QueryRefineParams& params);

/// Superpoints (plus E_s when given) attend to the refined queries, then feed-forward.
Tensor scene_update_block(const Tensor& scene_features, const Tensor& queries,
                          const std::optional<Tensor>& positional, const SceneUpdateParams& params);

struct LayerPrediction {
  std::size_t layer = 0;
  Tensor mask_logits;   // q x n_s
  Tensor soft_masks;    // sigmoid(mask_logits)
  std::vector<std::uint8_t> binary_masks;  // q x n_s, soft > tau
  Tensor class_logits;  // q x (c+1)
  Tensor class_probs;

  std::size_t num_queries() const { return mask_logits.rows(); }
  std::size_t num_superpoints() const { return mask_logits.cols(); }
  bool binary(std::size_t query, std::size_t superpoint) const {
    return binary_masks[query * num_superpoints() + superpoint] != 0;
  }
};

LayerPrediction predict(const Tensor& queries, const Tensor& mask_features, double tau,
                        const PredictionHead& head, std::size_t layer);

struct DecodeResult {
  std::vector<LayerPrediction> predictions;  // L + 1 entries
  std::vector<Tensor> masks;                 // attention mask used by each layer
  std::vector<std::vector<Tensor>> cross_weights;
  Tensor final_queries;
  Tensor final_scene_features;
};

DecodeResult decode(const QuerySet& queries, const SceneState& scene, const ModelConfig& cfg,
                    const DecoderParams& params);

/// Builds F_s, pooled coordinates, E_s and F_mask from voxel features and refined coordinates.
SceneState build_scene_state(const Tensor& voxel_features, const Tensor& refined_coords,
                             const SuperpointPartition& partition, const Bounds& bounds,
                             const ModelConfig& cfg, const DecoderParams& params);

}  // namespace sgiformer
