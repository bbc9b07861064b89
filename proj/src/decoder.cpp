#include "sgiformer/decoder.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace sgiformer {

namespace {

QueryRefineParams make_refine(ParamStore& store, const std::string& name, const ModelConfig& cfg) {
  const std::size_t d = cfg.width;
  return {LayerNorm::create(store, name + ".cross_norm", d),
          MultiHeadAttention::create(store, name + ".cross", d, cfg.heads),
          LayerNorm::create(store, name + ".self_norm", d),
          MultiHeadAttention::create(store, name + ".self", d, cfg.heads),
          LayerNorm::create(store, name + ".ffn_norm", d),
          Mlp::create(store, name + ".ffn", {d, 2 * d, d})};
}

SceneUpdateParams make_update(ParamStore& store, const std::string& name, const ModelConfig& cfg) {
  const std::size_t d = cfg.width;
  return {LayerNorm::create(store, name + ".attn_norm", d),
          MultiHeadAttention::create(store, name + ".attn", d, cfg.heads),
          LayerNorm::create(store, name + ".ffn_norm", d), Mlp::create(store, name + ".ffn", {d, 2 * d, d})};
}

}  // namespace

DecoderParams DecoderParams::create(ParamStore& store, const ModelConfig& cfg) {
  const std::size_t d = cfg.width;
  DecoderParams p;
  p.scene_proj = Linear::create(store, "decoder.scene_proj", cfg.backbone_width, d);
  p.mask_proj = Linear::create(store, "decoder.mask_proj", d, d);
  if (cfg.use_positional_encoding) {
    p.positional_proj = Linear::create(store, "decoder.positional_proj", 6 * cfg.fourier_bands, d);
  }
  p.head.norm = LayerNorm::create(store, "decoder.head.norm", d);
  p.head.mask_embed = Linear::create(store, "decoder.head.mask_embed", d, d);
  p.head.classifier = Mlp::create(store, "decoder.head.classifier", {d, d, cfg.num_classes + 1});
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string name = "decoder.layer" + std::to_string(l);
    DecoderLayerParams layer;
    layer.refine = make_refine(store, name + ".refine", cfg);
    if (cfg.use_scene_update) layer.update = make_update(store, name + ".update", cfg);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Tensor fourier_features(const Tensor& coords, const Bounds& bounds, std::size_t bands) {
  if (coords.rank() != 2 || coords.cols() != 3) {
    throw ShapeError("fourier_features: expected n x 3 coordinates, got " + shape_str(coords.shape()));
  }
  const std::size_t n = coords.rows();
  const std::size_t width = 6 * bands;
  std::array<double, 3> inv_extent{};
  for (int a = 0; a < 3; ++a) {
    const double extent = bounds.hi[a] - bounds.lo[a];
    inv_extent[a] = extent > 0.0 ? 1.0 / extent : 0.0;
  }
  std::vector<double> out(n * width);
  auto x = coords.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double t = inv_extent[a] > 0.0 ? (x[i * 3 + a] - bounds.lo[a]) * inv_extent[a] : 0.5;
      for (std::size_t b = 0; b < bands; ++b) {
        const double w = std::ldexp(std::numbers::pi, static_cast<int>(b));
        out[i * width + a * 2 * bands + 2 * b] = std::sin(w * t);
        out[i * width + a * 2 * bands + 2 * b + 1] = std::cos(w * t);
      }
    }
  }
  std::vector<double> kept = out;
  return make_op({n, width}, std::move(out), {coords},
                 [kept = std::move(kept), inv_extent, n, bands, width](std::span<const double> g,
                                                                        std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t a = 0; a < 3; ++a) {
                       if (inv_extent[a] == 0.0) continue;
                       double acc = 0.0;
                       for (std::size_t b = 0; b < bands; ++b) {
                         const double w = std::ldexp(std::numbers::pi, static_cast<int>(b));
                         const std::size_t c = i * width + a * 2 * bands + 2 * b;
                         // d sin = w cos, d cos = -w sin
                         acc += g[c] * w * kept[c + 1] - g[c + 1] * w * kept[c];
                       }
                       gin[0][i * 3 + a] += acc * inv_extent[a];
                     }
                   }
                 });
}

Tensor attention_mask(const Tensor& soft_masks, double tau) {
  if (soft_masks.rank() != 2) throw ShapeError("attention_mask: expected q x n_s, got " + shape_str(soft_masks.shape()));
  const std::size_t q = soft_masks.rows(), n = soft_masks.cols();
  std::vector<double> mask(q * n, 0.0);
  for (std::size_t i = 0; i < q; ++i) {
    bool any_open = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (soft_masks.at(i, j) < tau) {
        mask[i * n + j] = -std::numeric_limits<double>::infinity();
      } else {
        any_open = true;
      }
    }
    if (!any_open) std::fill(mask.begin() + static_cast<std::ptrdiff_t>(i * n),
                             mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * n), 0.0);
  }
  return Tensor::from({q, n}, std::move(mask));
}

QueryRefineResult query_refine_block(const Tensor& queries, const Tensor& scene_tokens, const Tensor& mask,
                                     const QueryRefineParams& p) {
  QueryRefineResult out;
  auto cross = p.cross(p.cross_norm(queries), scene_tokens, scene_tokens, mask);
  out.cross_weights = std::move(cross.weights);
  Tensor q = queries + cross.output;
  const Tensor normed = p.self_norm(q);
  q = q + p.self(normed, normed, normed).output;
  q = q + p.ffn(p.ffn_norm(q));
  out.queries = q;
  return out;
}

Tensor scene_update_block(const Tensor& scene_features, const Tensor& queries,
                          const std::optional<Tensor>& positional, const SceneUpdateParams& p) {
  const Tensor tokens = positional ? scene_features + *positional : scene_features;
  Tensor f = scene_features + p.attn(p.attn_norm(tokens), queries, queries).output;
  return f + p.ffn(p.ffn_norm(f));
}

LayerPrediction predict(const Tensor& queries, const Tensor& mask_features, double tau,
                        const PredictionHead& head, std::size_t layer) {
  if (queries.cols() != mask_features.cols()) {
    throw ShapeError("predict: queries " + shape_str(queries.shape()) + " vs mask features " +
                     shape_str(mask_features.shape()));
  }
  LayerPrediction pred;
  pred.layer = layer;
  const Tensor normed = head.norm(queries);
  pred.mask_logits = matmul_nt(head.mask_embed(normed), mask_features);
  pred.soft_masks = sigmoid(pred.mask_logits);
  pred.binary_masks.resize(pred.soft_masks.numel());
  for (std::size_t i = 0; i < pred.binary_masks.size(); ++i) pred.binary_masks[i] = pred.soft_masks.at(i) > tau;
  pred.class_logits = head.classifier(normed);
  pred.class_probs = softmax_rows(pred.class_logits);
  return pred;
}

SceneState build_scene_state(const Tensor& voxel_features, const Tensor& refined_coords,
                             const SuperpointPartition& partition, const Bounds& bounds,
                             const ModelConfig& cfg, const DecoderParams& params) {
  SceneState s;
  s.features = pool_to_superpoints(params.scene_proj(voxel_features), partition);
  s.coords = pool_to_superpoints(refined_coords, partition);
  if (cfg.use_positional_encoding) {
    s.positional = (*params.positional_proj)(fourier_features(s.coords, bounds, cfg.fourier_bands));
  }
  const bool with_position = s.positional && cfg.positional_mask_features;
  s.mask_features = params.mask_proj(with_position ? s.features + *s.positional : s.features);
  return s;
}

DecodeResult decode(const QuerySet& queries, const SceneState& scene, const ModelConfig& cfg,
                    const DecoderParams& params) {
  if (params.layers.size() != cfg.layers) throw std::invalid_argument("decode: layer count mismatch");
  DecodeResult out;
  Tensor q = queries.queries;
  Tensor f = scene.features;
  out.predictions.push_back(predict(q, scene.mask_features, cfg.mask_threshold, params.head, 0));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& layer = params.layers[l];
    Tensor mask = attention_mask(out.predictions.back().soft_masks, cfg.mask_threshold);
    const Tensor tokens = scene.positional ? f + *scene.positional : f;
    auto refined = query_refine_block(q, tokens, mask, layer.refine);
    q = refined.queries;
    if (layer.update) f = scene_update_block(f, q, scene.positional, *layer.update);
    out.masks.push_back(std::move(mask));
    out.cross_weights.push_back(std::move(refined.cross_weights));
    out.predictions.push_back(predict(q, scene.mask_features, cfg.mask_threshold, params.head, l + 1));
  }
  out.final_queries = q;
  out.final_scene_features = f;
  return out;
}

}  // namespace sgiformer
