#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "tcl/network.hpp"
#include "tcl/tensor.hpp"

namespace tcl {

struct PseudoLabelEntry {
  int label = 0;
  double confidence = 0.0;
};

// id -> pseudo-label memory. Ordered container so iteration, reporting, and
// serialization are deterministic.
struct PseudoLabelStore {
  double gamma = 0.5;   // per-cluster confident ratio
  double alpha = 0.99;  // weed-out confidence floor
  std::map<std::int64_t, PseudoLabelEntry> entries;

  void validate() const;
  std::optional<int> label_of(std::int64_t id) const;
};

struct ConfidencePrediction {
  Vector confidence;           // max assignment probability per instance
  std::vector<int> predicted;  // argmax, ties broken toward the lowest index
};

// Cluster assignment confidence from raw (un-augmented) inputs, via the
// graph-free eval path shared with assignment.
ConfidencePrediction predict_confidence(const Model& m, const Matrix& x);

// Per-batch selection: each cluster admits the instances whose confidence
// reaches its n-th largest prediction, n = max(1, floor(gamma * N / M));
// clusters with fewer than n predictions admit all of them. Admitted ids
// overwrite any stored entry. Returns the ids admitted by this call.
std::vector<std::int64_t> select_pseudo_labels(
    const ConfidencePrediction& cp, const std::vector<std::int64_t>& ids,
    Index cluster_count, PseudoLabelStore& store);

// Drops stored labels whose refreshed confidence fell strictly below alpha;
// retained entries take the refreshed confidence. Only instances present in
// this batch are re-examined. Returns dropped ids.
std::vector<std::int64_t> weed_out(const ConfidencePrediction& cp,
                                   const std::vector<std::int64_t>& ids,
                                   PseudoLabelStore& store);

// Self-supervised contrastive loss over the interleaved 2N-row ICH stack.
// pseudo[i] is instance i's label when present; an unlabeled instance acts
// as its own singleton class, so only its partner view leaves its
// denominator. Mean over all 2N rows; rows whose denominator empties out
// contribute zero.
Tensor scl_loss(const Tensor& z, const std::vector<std::optional<int>>& pseudo,
                double tau_i);

// Weighted cross-entropy on the strong views of labeled instances, weights
// w_c = N_p / (M * N_c) from in-batch labeled cluster sizes. Zero loss when
// nothing in the batch is labeled.
struct SlLossResult {
  Tensor loss;
  Index labeled = 0;
};
SlLossResult sl_loss(const Model& m, const Matrix& x_strong,
                     const std::vector<std::optional<int>>& pseudo);

Tensor boost_loss(const Tensor& scl, const Tensor& sl);

}  // namespace tcl
