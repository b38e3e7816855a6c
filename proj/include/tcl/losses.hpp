#pragma once

#include <vector>

#include "tcl/tensor.hpp"

namespace tcl {

// S(i, j) = cosine similarity of rows i and j of z, for all pairs.
Tensor pairwise_cosine(const Tensor& z);

namespace detail {

// Shared NT-Xent assembly over a pre-scaled similarity matrix. Row i
// contributes row_weight(i) * (-sim(i, partner[i]) + logsumexp over the
// columns enabled in neg_mask). Rows whose neg_mask row is all zero are
// dropped entirely. row_weight carries the outer normalization.
Tensor nt_xent(const Tensor& sim, const std::vector<Index>& partner,
               const Matrix& neg_mask, const Vector& row_weight);

// Throws unless every row of a soft assignment matrix is a probability
// vector (entries >= 0, sum within 1e-6 of 1).
void validate_assignment(const Matrix& y, const char* what);

// Partner map for interleaved stacks (2i <-> 2i+1) and the all-but-self
// denominator mask.
std::vector<Index> interleaved_partner(Index r);
Matrix all_but_self_mask(Index r);

}  // namespace detail

// Instance-level contrastive loss over an interleaved 2N-row stack of ICH
// outputs; rows 2i and 2i+1 are the two views of instance i. Positive =
// partner view; denominator = all other 2N-1 rows.
Tensor instance_loss(const Tensor& z, double tau_i);

// Entropy of the per-batch cluster assignment distribution: column means of
// both views, each contributing -sum p ln p. Range [0, 2 ln M].
Tensor cluster_entropy(const Tensor& y_weak, const Tensor& y_strong);

// Cluster-level contrastive loss over the 2M column vectors of the two
// N x M soft assignment matrices, minus the assignment entropy.
Tensor cluster_loss(const Tensor& y_weak, const Tensor& y_strong,
                    double tau_c);

struct TwinLossBreakdown {
  Tensor instance;
  Tensor cluster;  // entropy term included
  Tensor total;
  double entropy = 0.0;
};

// L = instance + cluster, with per-term values kept for reporting.
TwinLossBreakdown twin_loss(const Tensor& z, const Tensor& y_weak,
                            const Tensor& y_strong, double tau_i,
                            double tau_c);

}  // namespace tcl
