#include "sgiformer/nn.hpp"

#include <cmath>

namespace sgiformer {

Tensor ParamStore::add(const std::string& name, Tensor t, ParamGroup group) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  params_.push_back({name, t, group});
  return t;
}

Tensor ParamStore::add_uniform(const std::string& name, const Shape& shape, std::size_t fan_in,
                               ParamGroup group) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng_);
  return add(name, Tensor::parameter(shape, std::move(v)), group);
}

Tensor ParamStore::add_normal(const std::string& name, const Shape& shape, double stddev,
                              ParamGroup group) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng_);
  return add(name, Tensor::parameter(shape, std::move(v)), group);
}

Tensor ParamStore::add_constant(const std::string& name, const Shape& shape, double value,
                                ParamGroup group) {
  return add(name, Tensor::parameter(shape, std::vector<double>(shape_numel(shape), value)), group);
}

const NamedParam* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                      ParamGroup group) {
  Linear l;
  l.weight = store.add_uniform(name + ".weight", {in, out}, in, group);
  l.bias = store.add_uniform(name + ".bias", {out}, in, group);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, std::size_t width,
                            ParamGroup group) {
  LayerNorm n;
  n.gamma = store.add_constant(name + ".gamma", {width}, 1.0, group);
  n.beta = store.add_constant(name + ".beta", {width}, 0.0, group);
  return n;
}

Mlp Mlp::create(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths,
                ParamGroup group) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    m.layers.push_back(
        Linear::create(store, name + "." + std::to_string(i), widths[i], widths[i + 1], group));
  }
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name,
                                              std::size_t width, std::size_t heads) {
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("attention width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.q_proj = Linear::create(store, name + ".q", width, width);
  a.k_proj = Linear::create(store, name + ".k", width, width);
  a.v_proj = Linear::create(store, name + ".v", width, width);
  a.out_proj = Linear::create(store, name + ".out", width, width);
  a.heads = heads;
  return a;
}

AttentionResult MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys,
                                               const Tensor& values,
                                               const std::optional<Tensor>& additive_mask) const {
  const std::size_t width = q_proj.in_features();
  if (queries.cols() != width || keys.cols() != width || values.cols() != width) {
    throw ShapeError("attention: widths " + shape_str(queries.shape()) + ", " +
                     shape_str(keys.shape()) + ", " + shape_str(values.shape()) +
                     " do not match model width " + std::to_string(width));
  }
  if (keys.rows() != values.rows()) {
    throw ShapeError("attention: keys " + shape_str(keys.shape()) + " vs values " +
                     shape_str(values.shape()));
  }
  if (additive_mask && additive_mask->shape() != Shape{queries.rows(), keys.rows()}) {
    throw ShapeError("attention: mask " + shape_str(additive_mask->shape()) + " vs expected [" +
                     std::to_string(queries.rows()) + "x" + std::to_string(keys.rows()) + "]");
  }
  const std::size_t head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Tensor q = q_proj(queries);
  const Tensor k = k_proj(keys);
  const Tensor v = v_proj(values);

  AttentionResult result;
  std::vector<Tensor> head_outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = slice_cols(v, h * head_dim, head_dim);
    Tensor logits = scale(matmul_nt(qh, kh), inv_sqrt);
    if (additive_mask) logits = add(logits, *additive_mask);
    Tensor w = softmax_rows(logits);
    head_outputs.push_back(matmul(w, vh));
    result.weights.push_back(w);
  }
  const Tensor merged = heads == 1 ? head_outputs.front() : concat_cols(head_outputs);
  result.output = out_proj(merged);
  return result;
}

}  // namespace sgiformer
