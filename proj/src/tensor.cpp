#include "sgiformer/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace sgiformer {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  bool requires_grad = false;
  std::uint64_t order = 0;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

namespace {

std::atomic<std::uint64_t> g_node_counter{0};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " cannot hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->order = g_node_counter.fetch_add(1, std::memory_order_relaxed);
  return node;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(x.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  std::vector<double> kept = out;
  return make_op(x.shape(), std::move(out), {x},
                 [x, kept = std::move(kept), deriv](std::span<const double> g,
                                                    std::vector<std::span<double>>& gin) {
                   auto xin = x.data();
                   for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * deriv(xin[i], kept[i]);
                 });
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : node_(new_node(Shape{0}, {})) {}
Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(new_node(shape, std::vector<double>(shape_numel(shape), value)));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  return Tensor(new_node(shape, std::move(values)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_node(Shape{}, {value})); }

Tensor Tensor::parameter(const Shape& shape, std::vector<double> values) {
  auto node = new_node(shape, std::move(values));
  node->requires_grad = true;
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape()[0];
  if (rank() == 1) return 1;
  throw ShapeError("rows(): unsupported shape " + shape_str(shape()));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape()[1];
  if (rank() == 1) return shape()[0];
  throw ShapeError("cols(): unsupported shape " + shape_str(shape()));
}

std::span<const double> Tensor::data() const { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty() || node_->value.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

Tensor Tensor::detach() const { return Tensor(new_node(shape(), node_->value)); }

std::span<double> Tensor::mutable_data() {
  if (node_->backward) throw std::logic_error("mutable_data(): tensor is an op result");
  return node_->value;
}

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { node_->grad.clear(); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               BackwardFn backward_fn) {
  auto node = new_node(std::move(shape), std::move(values));
  if (t_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward_fn);
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node());
    }
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward(): loss must be a scalar, got " + shape_str(loss.shape()));
  }
  const auto& root = loss.node();
  if (!root->requires_grad) return;

  // Creation order is a topological order of the tape.
  std::vector<detail::Node*> nodes;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->order > b->order; });

  root->ensure_grad()[0] += 1.0;
  std::vector<std::span<double>> gin;
  for (detail::Node* n : nodes) {
    if (!n->backward) continue;
    if (n->grad.empty()) continue;
    gin.clear();
    for (auto& in : n->inputs) {
      if (in->requires_grad) {
        gin.emplace_back(in->ensure_grad());
      } else {
        gin.emplace_back();
      }
    }
    n->backward(n->grad, gin);
    // Intermediate gradients are consumed exactly once.
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   for (auto& gi : gin) {
                     if (gi.empty()) continue;
                     for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   if (!gin[0].empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                   if (!gin[1].empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] -= g[i];
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [a, b](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   auto x = a.data(), y = b.data();
                   if (!gin[0].empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * y[i];
                   if (!gin[1].empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] += g[i] * x[i];
                 });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [a, b](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   auto x = a.data(), y = b.data();
                   if (!gin[0].empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] / y[i];
                   if (!gin[1].empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] -= g[i] * x[i] / (y[i] * y[i]);
                 });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_rank2(x, "add_row");
  const std::size_t r = x.rows(), k = x.cols();
  if (row.numel() != k) {
    throw ShapeError("add_row: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(row.shape()));
  }
  auto xv = x.data(), bv = row.data();
  std::vector<double> out(r * k);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = xv[i * k + j] + bv[j];
  return make_op(x.shape(), std::move(out), {x, row},
                 [r, k](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   if (!gin[0].empty())
                     for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                   if (!gin[1].empty())
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < k; ++j) gin[1][j] += g[i * k + j];
                 });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op(Shape{}, {s}, {x},
                 [](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   for (double& v : gin[0]) v += g[0];
                 });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean(): empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor row_sum(const Tensor& x) {
  require_rank2(x, "row_sum");
  const std::size_t r = x.rows(), k = x.cols();
  auto xv = x.data();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += xv[i * k + j];
  return make_op(Shape{r}, std::move(out), {x},
                 [r, k](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < k; ++j) gin[0][i * k + j] += g[i];
                 });
}

// ---------------------------------------------------------------------------
// Matrix ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t r = a.shape()[0], k = a.shape()[1], s = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  auto av = a.data(), bv = b.data();
  std::vector<double> out(r * s, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double* orow = out.data() + i * s;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * s;
      for (std::size_t j = 0; j < s; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op(Shape{r, s}, std::move(out), {a, b},
                 [a, b, r, k, s](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   auto av = a.data(), bv = b.data();
                   if (!gin[0].empty()) {
                     // dA = G * B^T
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         const double* grow = g.data() + i * s;
                         const double* brow = bv.data() + p * s;
                         for (std::size_t j = 0; j < s; ++j) acc += grow[j] * brow[j];
                         gin[0][i * k + p] += acc;
                       }
                   }
                   if (!gin[1].empty()) {
                     // dB = A^T * G
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const double aip = av[i * k + p];
                         if (aip == 0.0) continue;
                         const double* grow = g.data() + i * s;
                         double* dst = gin[1].data() + p * s;
                         for (std::size_t j = 0; j < s; ++j) dst[j] += aip * grow[j];
                       }
                   }
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t r = a.shape()[0], k = a.shape()[1], s = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ShapeError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()) + "^T");
  }
  auto av = a.data(), bv = b.data();
  std::vector<double> out(r * s, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      double acc = 0.0;
      const double* arow = av.data() + i * k;
      const double* brow = bv.data() + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * s + j] = acc;
    }
  return make_op(Shape{r, s}, std::move(out), {a, b},
                 [a, b, r, k, s](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   auto av = a.data(), bv = b.data();
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < s; ++j) {
                       const double gij = g[i * s + j];
                       if (gij == 0.0) continue;
                       if (!gin[0].empty()) {
                         double* dst = gin[0].data() + i * k;
                         const double* brow = bv.data() + j * k;
                         for (std::size_t p = 0; p < k; ++p) dst[p] += gij * brow[p];
                       }
                       if (!gin[1].empty()) {
                         double* dst = gin[1].data() + j * k;
                         const double* arow = av.data() + i * k;
                         for (std::size_t p = 0; p < k; ++p) dst[p] += gij * arow[p];
                       }
                     }
                 });
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  auto xv = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return make_op(Shape{c, r}, std::move(out), {x},
                 [r, c](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += g[j * r + i];
                 });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  return make_op(shape, std::vector<double>(x.data().begin(), x.data().end()), {x},
                 [](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                 });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t r = x.rows(), k = x.cols();
  auto xv = x.data();
  std::vector<double> out(r * k);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    if (!std::isfinite(mx)) throw std::domain_error("softmax_rows: row without a finite entry");
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(row[j] - mx);
      out[i * k + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= total;
  }
  std::vector<double> y = out;
  return make_op(x.shape(), std::move(out), {x},
                 [y = std::move(y), r, k](std::span<const double> g,
                                          std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < r; ++i) {
                     double dot = 0.0;
                     for (std::size_t j = 0; j < k; ++j) dot += y[i * k + j] * g[i * k + j];
                     for (std::size_t j = 0; j < k; ++j)
                       gin[0][i * k + j] += y[i * k + j] * (g[i * k + j] - dot);
                   }
                 });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank2(x, "log_softmax_rows");
  const std::size_t r = x.rows(), k = x.cols();
  auto xv = x.data();
  std::vector<double> out(r * k);
  std::vector<double> probs(r * k);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < k; ++j) {
      out[i * k + j] = row[j] - lse;
      probs[i * k + j] = std::exp(out[i * k + j]);
    }
  }
  return make_op(x.shape(), std::move(out), {x},
                 [probs = std::move(probs), r, k](std::span<const double> g,
                                                  std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < r; ++i) {
                     double gs = 0.0;
                     for (std::size_t j = 0; j < k; ++j) gs += g[i * k + j];
                     for (std::size_t j = 0; j < k; ++j)
                       gin[0][i * k + j] += g[i * k + j] - probs[i * k + j] * gs;
                   }
                 });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank2(x, "layer_norm_rows");
  const std::size_t r = x.rows(), k = x.cols();
  if (gamma.numel() != k || beta.numel() != k) {
    throw ShapeError("layer_norm_rows: affine shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(gamma.shape()));
  }
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  std::vector<double> out(r * k), xhat(r * k), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * k;
    double mu = 0.0;
    for (std::size_t j = 0; j < k; ++j) mu += row[j];
    mu /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t j = 0; j < k; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(k);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < k; ++j) {
      xhat[i * k + j] = (row[j] - mu) * inv_std[i];
      out[i * k + j] = gv[j] * xhat[i * k + j] + bv[j];
    }
  }
  return make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), r, k](
          std::span<const double> g, std::vector<std::span<double>>& gin) {
        auto gv = gamma.data();
        if (!gin[1].empty())
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < k; ++j) gin[1][j] += g[i * k + j] * xhat[i * k + j];
        if (!gin[2].empty())
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < k; ++j) gin[2][j] += g[i * k + j];
        if (gin[0].empty()) return;
        const double kk = static_cast<double>(k);
        for (std::size_t i = 0; i < r; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            const double gx = g[i * k + j] * gv[j];
            m1 += gx;
            m2 += gx * xhat[i * k + j];
          }
          m1 /= kk;
          m2 /= kk;
          for (std::size_t j = 0; j < k; ++j) {
            const double gx = g[i * k + j] * gv[j];
            gin[0][i * k + j] += inv_std[i] * (gx - m1 - xhat[i * k + j] * m2);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_rank2(x, "gather_rows");
  const std::size_t r = x.rows(), k = x.cols();
  auto xv = x.data();
  std::vector<double> out(index.size() * k);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= r) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                       shape_str(x.shape()));
    }
    std::copy_n(xv.data() + index[i] * k, k, out.data() + i * k);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op(Shape{index.size(), k}, std::move(out), {x},
                 [idx = std::move(idx), k](std::span<const double> g,
                                           std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     for (std::size_t j = 0; j < k; ++j) gin[0][idx[i] * k + j] += g[i * k + j];
                 });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t k = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != k) {
      throw ShapeError("concat_rows: width mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * k);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_op(Shape{total, k}, std::move(out), parts,
                 [offsets = std::move(offsets)](std::span<const double> g,
                                                std::vector<std::span<double>>& gin) {
                   for (std::size_t p = 0; p < gin.size(); ++p)
                     for (std::size_t i = 0; i < gin[p].size(); ++i) gin[p][i] += g[offsets[p] + i];
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != r) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(v.data() + i * widths[p], widths[p], out.data() + i * total + offset);
    offset += widths[p];
  }
  return make_op(Shape{r, total}, std::move(out), parts,
                 [widths = std::move(widths), r, total](std::span<const double> g,
                                                        std::vector<std::span<double>>& gin) {
                   std::size_t off = 0;
                   for (std::size_t p = 0; p < gin.size(); ++p) {
                     if (!gin[p].empty())
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < widths[p]; ++j)
                           gin[p][i * widths[p] + j] += g[i * total + off + j];
                     off += widths[p];
                   }
                 });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t r = x.rows(), k = x.cols();
  if (begin + count > k) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
  }
  auto xv = x.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xv.data() + i * k + begin, count, out.data() + i * count);
  return make_op(Shape{r, count}, std::move(out), {x},
                 [r, k, begin, count](std::span<const double> g,
                                      std::vector<std::span<double>>& gin) {
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < count; ++j)
                       gin[0][i * k + begin + j] += g[i * count + j];
                 });
}

Tensor segment_mean(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups) {
  require_rank2(x, "segment_mean");
  const std::size_t r = x.rows(), k = x.cols();
  auto xv = x.data();
  std::vector<double> out(groups.size() * k, 0.0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& members = groups[gi];
    if (members.empty()) throw ShapeError("segment_mean: empty group " + std::to_string(gi));
    double* dst = out.data() + gi * k;
    for (std::size_t m : members) {
      if (m >= r) {
        throw ShapeError("segment_mean: member " + std::to_string(m) + " out of range for " +
                         shape_str(x.shape()));
      }
      const double* src = xv.data() + m * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (std::size_t j = 0; j < k; ++j) dst[j] *= inv;
  }
  return make_op(Shape{groups.size(), k}, std::move(out), {x},
                 [groups, k](std::span<const double> g, std::vector<std::span<double>>& gin) {
                   for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                     const double inv = 1.0 / static_cast<double>(groups[gi].size());
                     for (std::size_t m : groups[gi])
                       for (std::size_t j = 0; j < k; ++j) gin[0][m * k + j] += g[gi * k + j] * inv;
                   }
                 });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_rank2(logits, "cross_entropy");
  const std::size_t r = logits.rows(), k = logits.cols();
  if (targets.size() != r) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     shape_str(logits.shape()));
  }
  if (r == 0) throw ShapeError("cross_entropy: no rows");
  auto xv = logits.data();
  std::vector<double> probs(r * k);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] >= k) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[i]) +
                              " out of range for width " + std::to_string(k));
    }
    const double* row = xv.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[i]];
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - lse);
  }
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return make_op(Shape{}, {total / static_cast<double>(r)}, {logits},
                 [probs = std::move(probs), tg = std::move(tg), r, k](
                     std::span<const double> g, std::vector<std::span<double>>& gin) {
                   const double s = g[0] / static_cast<double>(r);
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < k; ++j)
                       gin[0][i * k + j] += s * (probs[i * k + j] - (j == tg[i] ? 1.0 : 0.0));
                 });
}

}  // namespace sgiformer
