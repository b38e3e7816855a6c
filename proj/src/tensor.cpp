#include "tcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "tcl/errors.hpp"

namespace tcl {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream out;
  out << m.rows() << "x" << m.cols();
  return out.str();
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op) + ": shape mismatch (" +
                        shape_of(a.value()) + " vs " + shape_of(b.value()) +
                        ")");
}

void check_finite(const Matrix& m, const char* op) {
  if (!m.allFinite())
    throw NumericError(std::string(op) + ": non-finite result");
}

}  // namespace

Tensor make_op(Matrix value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop,
               const char* op_name) {
  check_finite(value, op_name);
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  for (const Tensor& p : parents) {
    node->parents.push_back(p.node());
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Matrix value) {
  check_finite(value, "constant");
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  check_finite(value, "parameter");
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->is_leaf = true;
  node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
  return Tensor(std::move(node));
}

const Matrix& Tensor::value() const {
  if (!node_) throw ContractError("value: undefined tensor");
  return node_->value;
}

const Matrix& Tensor::grad() const {
  if (!node_) throw ContractError("grad: undefined tensor");
  if (!node_->requires_grad)
    throw ContractError("grad: tensor does not require gradients");
  return node_->grad;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::zero_grad() {
  if (node_ && node_->requires_grad) node_->grad.setZero();
}

Matrix& Tensor::mutable_value() {
  if (!node_) throw ContractError("mutable_value: undefined tensor");
  if (!node_->is_leaf)
    throw ContractError("mutable_value: only leaf parameters may be mutated");
  return node_->value;
}

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("backward: loss must be 1x1, got " +
                        shape_of(loss.value()));
  if (!loss.requires_grad())
    throw ContractError("backward: loss does not require gradients");

  // Iterative post-order over the grad-requiring subgraph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  detail::Node* root = loss.node().get();
  visited.insert(root);
  stack.emplace_back(root, 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-sweep scratch; leaves keep accumulating.
  for (detail::Node* node : order)
    if (!node->is_leaf) node->grad.setZero();
  root->grad(0, 0) += 1.0;

  // Reverse post-order: every consumer runs before its inputs.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backprop) node->backprop(*node);
  }
}

// --- operations ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return make_op(
      a.value() + b.value(), {a, b},
      [pa, pb](detail::Node& self) {
        if (pa->requires_grad) pa->grad += self.grad;
        if (pb->requires_grad) pb->grad += self.grad;
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  require_same_shape(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return make_op(
      a.value() - b.value(), {a, b},
      [pa, pb](detail::Node& self) {
        if (pa->requires_grad) pa->grad += self.grad;
        if (pb->requires_grad) pb->grad -= self.grad;
      },
      "sub");
}

Tensor scale(const Tensor& a, double s) {
  require_defined(a, "scale");
  auto pa = a.node();
  return make_op(
      s * a.value(), {a},
      [pa, s](detail::Node& self) {
        if (pa->requires_grad) pa->grad += s * self.grad;
      },
      "scale");
}

Tensor mul_const(const Tensor& a, const Matrix& c) {
  require_defined(a, "mul_const");
  if (a.rows() != c.rows() || a.cols() != c.cols())
    throw ContractError("mul_const: shape mismatch (" + shape_of(a.value()) +
                        " vs " + shape_of(c) + ")");
  auto pa = a.node();
  return make_op(
      a.value().cwiseProduct(c), {a},
      [pa, c](detail::Node& self) {
        if (pa->requires_grad) pa->grad += self.grad.cwiseProduct(c);
      },
      "mul_const");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.cols() != b.rows())
    throw ContractError("matmul: inner dimensions differ (" +
                        shape_of(a.value()) + " vs " + shape_of(b.value()) +
                        ")");
  auto pa = a.node(), pb = b.node();
  return make_op(
      a.value() * b.value(), {a, b},
      [pa, pb](detail::Node& self) {
        if (pa->requires_grad) pa->grad += self.grad * pb->value.transpose();
        if (pb->requires_grad) pb->grad += pa->value.transpose() * self.grad;
      },
      "matmul");
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  auto pa = a.node();
  return make_op(
      a.value().transpose(), {a},
      [pa](detail::Node& self) {
        if (pa->requires_grad) pa->grad += self.grad.transpose();
      },
      "transpose");
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  auto pa = a.node();
  return make_op(
      a.value().cwiseMax(0.0), {a},
      [pa](detail::Node& self) {
        if (pa->requires_grad)
          pa->grad.array() += (pa->value.array() > 0.0)
                                  .select(self.grad.array(), 0.0);
      },
      "relu");
}

Tensor xlogx(const Tensor& a) {
  require_defined(a, "xlogx");
  Matrix y = a.value().unaryExpr(
      [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; });
  auto pa = a.node();
  return make_op(
      std::move(y), {a},
      [pa](detail::Node& self) {
        if (!pa->requires_grad) return;
        pa->grad.array() +=
            (pa->value.array() > 0.0)
                .select(self.grad.array() * (pa->value.array().log() + 1.0),
                        0.0);
      },
      "xlogx");
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& bias) {
  require_defined(a, "add_row_broadcast");
  require_defined(bias, "add_row_broadcast");
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ContractError("add_row_broadcast: bias must be 1x" +
                        std::to_string(a.cols()) + ", got " +
                        shape_of(bias.value()));
  Matrix y = a.value();
  y.rowwise() += bias.value().row(0);
  auto pa = a.node(), pb = bias.node();
  return make_op(
      std::move(y), {a, bias},
      [pa, pb](detail::Node& self) {
        if (pa->requires_grad) pa->grad += self.grad;
        if (pb->requires_grad) pb->grad.row(0) += self.grad.colwise().sum();
      },
      "add_row_broadcast");
}

Tensor softmax_rows(const Tensor& a) {
  require_defined(a, "softmax_rows");
  Matrix y(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    double m = a.value().row(i).maxCoeff();
    Eigen::ArrayXd e = (a.value().row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  auto pa = a.node();
  return make_op(
      std::move(y), {a},
      [pa](detail::Node& self) {
        if (!pa->requires_grad) return;
        for (Index i = 0; i < self.value.rows(); ++i) {
          double dot = self.grad.row(i).dot(self.value.row(i));
          pa->grad.row(i).array() +=
              self.value.row(i).array() *
              (self.grad.row(i).array() - dot);
        }
      },
      "softmax_rows");
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_defined(a, "l2_normalize_rows");
  constexpr double kMinNorm = 1e-12;
  Matrix y = a.value();
  Vector norms(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    double n = y.row(i).norm();
    norms(i) = n;
    if (n >= kMinNorm) y.row(i) /= n;
  }
  auto pa = a.node();
  return make_op(
      std::move(y), {a},
      [pa, norms](detail::Node& self) {
        if (!pa->requires_grad) return;
        for (Index i = 0; i < self.value.rows(); ++i) {
          if (norms(i) < kMinNorm) continue;  // clamped row: zero gradient
          double s = self.value.row(i).dot(self.grad.row(i));
          pa->grad.row(i) +=
              (self.grad.row(i) - s * self.value.row(i)) / norms(i);
        }
      },
      "l2_normalize_rows");
}

Tensor masked_logsumexp_rows(const Tensor& a, const Matrix& mask) {
  require_defined(a, "masked_logsumexp_rows");
  if (a.rows() != mask.rows() || a.cols() != mask.cols())
    throw ContractError("masked_logsumexp_rows: mask shape mismatch (" +
                        shape_of(a.value()) + " vs " + shape_of(mask) + ")");
  if (!((mask.array() == 0.0) || (mask.array() == 1.0)).all())
    throw ContractError("masked_logsumexp_rows: mask entries must be 0 or 1");
  Matrix y(a.rows(), 1);
  std::vector<char> empty(static_cast<std::size_t>(a.rows()), 0);
  for (Index i = 0; i < a.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < a.cols(); ++j)
      if (mask(i, j) != 0.0) m = std::max(m, a.value()(i, j));
    if (!std::isfinite(m)) {
      empty[static_cast<std::size_t>(i)] = 1;
      y(i, 0) = 0.0;
      continue;
    }
    double s = 0.0;
    for (Index j = 0; j < a.cols(); ++j)
      if (mask(i, j) != 0.0) s += std::exp(a.value()(i, j) - m);
    y(i, 0) = m + std::log(s);
  }
  auto pa = a.node();
  return make_op(
      std::move(y), {a},
      [pa, mask, empty](detail::Node& self) {
        if (!pa->requires_grad) return;
        for (Index i = 0; i < self.value.rows(); ++i) {
          if (empty[static_cast<std::size_t>(i)]) continue;
          double g = self.grad(i, 0);
          if (g == 0.0) continue;
          double lse = self.value(i, 0);
          for (Index j = 0; j < pa->value.cols(); ++j)
            if (mask(i, j) != 0.0)
              pa->grad(i, j) += g * std::exp(pa->value(i, j) - lse);
        }
      },
      "masked_logsumexp_rows");
}

Tensor sum_rows(const Tensor& a) {
  require_defined(a, "sum_rows");
  auto pa = a.node();
  return make_op(
      Matrix(a.value().rowwise().sum()), {a},
      [pa](detail::Node& self) {
        if (pa->requires_grad)
          pa->grad += self.grad.replicate(1, pa->value.cols());
      },
      "sum_rows");
}

Tensor col_sums(const Tensor& a) {
  require_defined(a, "col_sums");
  auto pa = a.node();
  return make_op(
      Matrix(a.value().colwise().sum()), {a},
      [pa](detail::Node& self) {
        if (pa->requires_grad)
          pa->grad += self.grad.replicate(pa->value.rows(), 1);
      },
      "col_sums");
}

Tensor sum_all(const Tensor& a) {
  require_defined(a, "sum_all");
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  auto pa = a.node();
  return make_op(
      std::move(y), {a},
      [pa](detail::Node& self) {
        if (pa->requires_grad) pa->grad.array() += self.grad(0, 0);
      },
      "sum_all");
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_defined(a, "concat_rows");
  require_defined(b, "concat_rows");
  if (a.cols() != b.cols())
    throw ContractError("concat_rows: column counts differ (" +
                        shape_of(a.value()) + " vs " + shape_of(b.value()) +
                        ")");
  Matrix y(a.rows() + b.rows(), a.cols());
  y.topRows(a.rows()) = a.value();
  y.bottomRows(b.rows()) = b.value();
  auto pa = a.node(), pb = b.node();
  return make_op(
      std::move(y), {a, b},
      [pa, pb](detail::Node& self) {
        if (pa->requires_grad)
          pa->grad += self.grad.topRows(pa->value.rows());
        if (pb->requires_grad)
          pb->grad += self.grad.bottomRows(pb->value.rows());
      },
      "concat_rows");
}

Tensor gather_rows(const Tensor& a, const std::vector<Index>& rows) {
  require_defined(a, "gather_rows");
  for (Index r : rows)
    if (r < 0 || r >= a.rows())
      throw ContractError("gather_rows: index " + std::to_string(r) +
                          " out of range for " + shape_of(a.value()));
  Matrix y(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    y.row(static_cast<Index>(r)) = a.value().row(rows[r]);
  auto pa = a.node();
  return make_op(
      std::move(y), {a},
      [pa, rows](detail::Node& self) {
        if (!pa->requires_grad) return;
        for (std::size_t r = 0; r < rows.size(); ++r)
          pa->grad.row(rows[r]) += self.grad.row(static_cast<Index>(r));
      },
      "gather_rows");
}

// --- optimizer ------------------------------------------------------------

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig config)
    : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    if (!p.defined() || !p.requires_grad())
      throw ContractError("AdamState: parameters must be grad-requiring leaves");
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void AdamState::step(std::vector<Tensor>& params) {
  if (params.size() != m_.size())
    throw ContractError("AdamState::step: parameter count changed");
  // Validate every gradient before touching any state: a failed step must
  // leave parameters, moments, and the step count untouched.
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& raw = params[i].grad();
    if (raw.rows() != m_[i].rows() || raw.cols() != m_[i].cols())
      throw ContractError("AdamState::step: parameter shape changed");
    if (!raw.allFinite())
      throw NumericError("adam: non-finite gradient for parameter " +
                         std::to_string(i));
  }
  ++step_count_;
  double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix g = params[i].grad();
    if (config_.weight_decay != 0.0)
      g += config_.weight_decay * params[i].value();
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    params[i].mutable_value().array() -=
        config_.learning_rate * (m_[i].array() / bc1) /
        ((v_[i].array() / bc2).sqrt() + config_.epsilon);
  }
}

void AdamState::restore(std::int64_t step_count, std::vector<Matrix> m,
                        std::vector<Matrix> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw DataError("adam state: moment count mismatch");
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() ||
        v[i].rows() != v_[i].rows() || v[i].cols() != v_[i].cols())
      throw DataError("adam state: moment shape mismatch");
  if (step_count < 0) throw DataError("adam state: negative step count");
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace tcl
