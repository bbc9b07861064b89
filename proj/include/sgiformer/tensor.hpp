#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgiformer {

/// Raised when operand shapes are incompatible; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major tensor of doubles with an optional reverse-mode graph node.
///
/// A Tensor is a cheap shared handle. Values produced by an operation are never
/// mutated afterwards; only leaf parameters are updated, and only between passes.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Leaf that accumulates gradients.
  static Tensor parameter(const Shape& shape, std::vector<double> values);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  /// Rows/cols of a rank-2 tensor; a rank-1 tensor is treated as one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  bool has_grad() const;
  /// Gradient buffer; empty when no gradient has reached this tensor.
  std::span<const double> grad() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  // Leaf-only mutation (optimizer, checkpoint loading, tests).
  std::span<double> mutable_data();
  std::span<double> mutable_grad();
  void zero_grad();

  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(std::span<const double>,
                                           std::vector<std::span<double>>&)>);
};

/// Backward closure: receives the output gradient and one gradient span per
/// input (empty when that input does not require gradients) to accumulate into.
using BackwardFn =
    std::function<void(std::span<const double>, std::vector<std::span<double>>&)>;

/// Creates an op result. The closure is kept only if some input requires grad.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               BackwardFn backward);

/// Populates gradients of every parameter reachable from a scalar loss.
void backward(const Tensor& loss);

/// While alive, ops on this thread do not record graph nodes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// Subgradient 0 at 0.
Tensor abs(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// x[r x k] + row[k] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Per-row sums of a rank-2 tensor, shape {rows}.
Tensor row_sum(const Tensor& x);

// Matrix ops (rank 2).
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& x, const Shape& shape);

/// Row-wise softmax, stabilized by max subtraction. Entries equal to -inf
/// receive exactly zero weight; every row needs at least one finite entry.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

// Indexing and layout.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// Output row g is the mean of the rows listed in groups[g]. Groups must be non-empty.
Tensor segment_mean(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups);

/// Mean over rows of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

}  // namespace sgiformer
