#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sgiformer/tensor.hpp"

namespace sgiformer {

/// Optimizer group a parameter belongs to.
enum class ParamGroup { kDefault, kVoxelHead };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::kDefault;
};

/// Ordered collection of model parameters. Iteration follows registration order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  /// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
  Tensor add_uniform(const std::string& name, const Shape& shape, std::size_t fan_in,
                     ParamGroup group = ParamGroup::kDefault);
  Tensor add_normal(const std::string& name, const Shape& shape, double stddev,
                    ParamGroup group = ParamGroup::kDefault);
  Tensor add_constant(const std::string& name, const Shape& shape, double value,
                      ParamGroup group = ParamGroup::kDefault);

  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }
  const NamedParam* find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  Tensor add(const std::string& name, Tensor t, ParamGroup group);

  std::mt19937_64 rng_;
  std::vector<NamedParam> params_;
};

/// y = x W + b with W stored fan_in x fan_out.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       ParamGroup group = ParamGroup::kDefault);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParamStore& store, const std::string& name, std::size_t width,
                          ParamGroup group = ParamGroup::kDefault);
  Tensor operator()(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths,
                    ParamGroup group = ParamGroup::kDefault);
  Tensor operator()(const Tensor& x) const;
};

struct AttentionResult {
  Tensor output;
  /// Per-head attention weights (num_queries x num_keys).
  std::vector<Tensor> weights;
};

/// Multi-head scaled dot-product attention with input/output projections.
struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, std::size_t width,
                                   std::size_t heads);

  /// `additive_mask`, when given, is (num_queries x num_keys) and is added to the
  /// logits before the softmax; -inf removes a key for that query entirely.
  AttentionResult operator()(const Tensor& queries, const Tensor& keys, const Tensor& values,
                             const std::optional<Tensor>& additive_mask = std::nullopt) const;
};

}  // namespace sgiformer
