#include "tcl/losses.hpp"

#include <cmath>
#include <string>

#include "tcl/errors.hpp"

namespace tcl {

Tensor pairwise_cosine(const Tensor& z) {
  Tensor zn = l2_normalize_rows(z);
  return matmul(zn, transpose(zn));
}

namespace detail {

Tensor nt_xent(const Tensor& sim, const std::vector<Index>& partner,
               const Matrix& neg_mask, const Vector& row_weight) {
  const Index r = sim.rows();
  if (sim.cols() != r)
    throw ContractError("nt_xent: similarity matrix must be square");
  if (static_cast<Index>(partner.size()) != r || row_weight.size() != r)
    throw ContractError("nt_xent: partner/weight length mismatch");
  if (neg_mask.rows() != r || neg_mask.cols() != r)
    throw ContractError("nt_xent: mask shape mismatch");

  Vector w = row_weight;
  for (Index i = 0; i < r; ++i) {
    if (partner[static_cast<std::size_t>(i)] < 0 ||
        partner[static_cast<std::size_t>(i)] >= r)
      throw ContractError("nt_xent: partner index out of range");
    if (neg_mask.row(i).sum() == 0.0) w(i) = 0.0;  // empty denominator
  }

  Matrix pos_pick = Matrix::Zero(r, r);
  for (Index i = 0; i < r; ++i)
    pos_pick(i, partner[static_cast<std::size_t>(i)]) = w(i);
  Tensor pos_term = sum_all(mul_const(sim, pos_pick));
  Tensor lse = masked_logsumexp_rows(sim, neg_mask);
  Tensor lse_term = sum_all(mul_const(lse, Matrix(w)));
  return sub(lse_term, pos_term);
}

void validate_assignment(const Matrix& y, const char* what) {
  for (Index i = 0; i < y.rows(); ++i) {
    double s = y.row(i).sum();
    if (std::abs(s - 1.0) > 1e-6)
      throw ContractError(std::string(what) + ": row " + std::to_string(i) +
                          " sums to " + std::to_string(s) + ", expected 1");
    if ((y.row(i).array() < 0.0).any())
      throw ContractError(std::string(what) + ": row " + std::to_string(i) +
                          " has negative entries");
  }
}

std::vector<Index> interleaved_partner(Index r) {
  std::vector<Index> partner(static_cast<std::size_t>(r));
  for (Index i = 0; i < r; ++i)
    partner[static_cast<std::size_t>(i)] = i ^ 1;
  return partner;
}

Matrix all_but_self_mask(Index r) {
  return Matrix::Ones(r, r) - Matrix::Identity(r, r);
}

}  // namespace detail

Tensor instance_loss(const Tensor& z, double tau_i) {
  if (tau_i <= 0.0) throw ContractError("instance_loss: tau must be positive");
  const Index r = z.rows();
  if (r < 2 || r % 2 != 0)
    throw ContractError("instance_loss: expected an even row count >= 2");
  Tensor sim = scale(pairwise_cosine(z), 1.0 / tau_i);
  Vector w = Vector::Constant(r, 1.0 / static_cast<double>(r));
  return detail::nt_xent(sim, detail::interleaved_partner(r),
                         detail::all_but_self_mask(r), w);
}

Tensor cluster_entropy(const Tensor& y_weak, const Tensor& y_strong) {
  if (y_weak.rows() != y_strong.rows() || y_weak.cols() != y_strong.cols())
    throw ContractError("cluster_entropy: view shapes differ");
  detail::validate_assignment(y_weak.value(), "cluster_entropy (weak)");
  detail::validate_assignment(y_strong.value(), "cluster_entropy (strong)");
  double inv_n = 1.0 / static_cast<double>(y_weak.rows());
  Tensor p_weak = scale(col_sums(y_weak), inv_n);
  Tensor p_strong = scale(col_sums(y_strong), inv_n);
  return scale(add(sum_all(xlogx(p_weak)), sum_all(xlogx(p_strong))), -1.0);
}

Tensor cluster_loss(const Tensor& y_weak, const Tensor& y_strong,
                    double tau_c) {
  if (tau_c <= 0.0) throw ContractError("cluster_loss: tau must be positive");
  if (y_weak.rows() != y_strong.rows() || y_weak.cols() != y_strong.cols())
    throw ContractError("cluster_loss: view shapes differ");
  const Index m = y_weak.cols();
  if (m < 2) throw ContractError("cluster_loss: need at least 2 clusters");
  detail::validate_assignment(y_weak.value(), "cluster_loss (weak)");
  detail::validate_assignment(y_strong.value(), "cluster_loss (strong)");

  // 2M x N stack of cluster representations: rows 2i and 2i+1 are cluster
  // i's column under the weak and strong view.
  Tensor stacked = concat_rows(transpose(y_weak), transpose(y_strong));
  std::vector<Index> order(static_cast<std::size_t>(2 * m));
  for (Index i = 0; i < m; ++i) {
    order[static_cast<std::size_t>(2 * i)] = i;
    order[static_cast<std::size_t>(2 * i + 1)] = m + i;
  }
  Tensor u = gather_rows(stacked, order);

  Tensor sim = scale(pairwise_cosine(u), 1.0 / tau_c);
  Vector w = Vector::Constant(2 * m, 1.0 / (2.0 * static_cast<double>(m)));
  Tensor contrast =
      detail::nt_xent(sim, detail::interleaved_partner(2 * m),
                      detail::all_but_self_mask(2 * m), w);
  return sub(contrast, cluster_entropy(y_weak, y_strong));
}

TwinLossBreakdown twin_loss(const Tensor& z, const Tensor& y_weak,
                            const Tensor& y_strong, double tau_i,
                            double tau_c) {
  if (z.rows() != 2 * y_weak.rows())
    throw ContractError("twin_loss: instance stack must have 2N rows");
  TwinLossBreakdown out;
  out.instance = instance_loss(z, tau_i);
  out.cluster = cluster_loss(y_weak, y_strong, tau_c);
  out.total = add(out.instance, out.cluster);
  out.entropy = cluster_entropy(y_weak, y_strong).value()(0, 0);
  return out;
}

}  // namespace tcl
