#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tcl/linalg.hpp"

namespace tcl {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // allocated (zero) iff requires_grad
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Distributes this node's grad into its parents' grads.
  std::function<void(Node&)> backprop;
};

}  // namespace detail

// Handle to a node in a dynamically built computation graph over dense 2-D
// double matrices. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  // Graph input with no gradient.
  static Tensor constant(Matrix value);
  // Trainable leaf; gradients accumulate across backward calls until
  // zero_grad.
  static Tensor parameter(Matrix value);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

  void zero_grad();
  // In-place value update for optimizers; leaves only.
  Matrix& mutable_value();

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Matrix value, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop,
                        const char* op_name);
};

// Reverse-mode sweep from a 1x1 loss. Gradients of interior nodes are
// recomputed from scratch; leaf gradients accumulate.
void backward(const Tensor& loss);

// --- operations ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Elementwise product with a fixed (non-differentiated) coefficient matrix.
Tensor mul_const(const Tensor& a, const Matrix& c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
// y = x ln x with 0 ln 0 := 0; derivative 0 where x <= 0.
Tensor xlogx(const Tensor& a);
// Adds a 1 x C bias to every row of an N x C input.
Tensor add_row_broadcast(const Tensor& a, const Tensor& bias);
Tensor softmax_rows(const Tensor& a);
// Rows with L2 norm below 1e-12 pass through unchanged with zero gradient.
Tensor l2_normalize_rows(const Tensor& a);
// Per-row log(sum_j mask(i,j) * exp(a(i,j))), computed around the row max of
// the masked entries. mask entries must be 0 or 1; an all-zero mask row
// yields value 0 with zero gradient.
Tensor masked_logsumexp_rows(const Tensor& a, const Matrix& mask);
Tensor sum_rows(const Tensor& a);   // N x C -> N x 1
Tensor col_sums(const Tensor& a);   // N x C -> 1 x C
Tensor sum_all(const Tensor& a);    // N x C -> 1 x 1
Tensor concat_rows(const Tensor& a, const Tensor& b);
// y.row(r) = a.row(rows[r]); duplicate indices accumulate gradient.
Tensor gather_rows(const Tensor& a, const std::vector<Index>& rows);

// --- optimizer ------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 applied to the gradient
};

// Per-parameter first/second moments plus the shared step count.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const std::vector<Tensor>& params, AdamConfig config);

  void step(std::vector<Tensor>& params);

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_count_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

  // Restores a serialized state; shapes must match the bound parameters.
  void restore(std::int64_t step_count, std::vector<Matrix> m,
               std::vector<Matrix> v);

 private:
  AdamConfig config_;
  std::int64_t step_count_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace tcl
