#include "tcl/boosting.hpp"

#include <algorithm>
#include <cmath>

#include "tcl/errors.hpp"
#include "tcl/losses.hpp"

namespace tcl {

void PseudoLabelStore::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ConfigError("boosting: gamma must be in (0, 1]");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigError("boosting: alpha must be in (0, 1]");
  for (const auto& [id, entry] : entries)
    if (entry.label < 0 || entry.confidence < 0.0 || entry.confidence > 1.0)
      throw DataError("pseudo-label store: invalid entry for id " +
                      std::to_string(id));
}

std::optional<int> PseudoLabelStore::label_of(std::int64_t id) const {
  auto it = entries.find(id);
  if (it == entries.end()) return std::nullopt;
  return it->second.label;
}

ConfidencePrediction predict_confidence(const Model& m, const Matrix& x) {
  ConfidencePrediction cp;
  cp.confidence.resize(x.rows());
  cp.predicted.resize(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    RowCluster rc = eval_cluster_row(m, x.row(i));
    int best = 0;
    for (Index j = 1; j < rc.probs.cols(); ++j)
      if (rc.probs(j) > rc.probs(best)) best = static_cast<int>(j);
    cp.confidence(i) = rc.probs(best);
    cp.predicted[static_cast<std::size_t>(i)] = best;
  }
  return cp;
}

namespace {

void check_batch(const ConfidencePrediction& cp,
                 const std::vector<std::int64_t>& ids) {
  if (cp.confidence.size() != static_cast<Index>(cp.predicted.size()) ||
      cp.predicted.size() != ids.size())
    throw ContractError("boosting: batch size mismatch");
}

}  // namespace

std::vector<std::int64_t> select_pseudo_labels(
    const ConfidencePrediction& cp, const std::vector<std::int64_t>& ids,
    Index cluster_count, PseudoLabelStore& store) {
  check_batch(cp, ids);
  if (cluster_count < 2)
    throw ContractError("select_pseudo_labels: cluster count must be >= 2");
  const auto n_batch = static_cast<double>(ids.size());
  const auto quota = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::floor(store.gamma * n_batch /
                        static_cast<double>(cluster_count))));

  std::vector<std::int64_t> admitted;
  for (Index k = 0; k < cluster_count; ++k) {
    std::vector<double> confs;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (cp.predicted[i] == static_cast<int>(k))
        confs.push_back(cp.confidence(static_cast<Index>(i)));
    if (confs.empty()) continue;
    std::sort(confs.begin(), confs.end(), std::greater<>());
    double threshold = confs[std::min(quota, confs.size()) - 1];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (cp.predicted[i] != static_cast<int>(k)) continue;
      if (cp.confidence(static_cast<Index>(i)) < threshold) continue;
      store.entries[ids[i]] = {cp.predicted[i],
                               cp.confidence(static_cast<Index>(i))};
      admitted.push_back(ids[i]);
    }
  }
  return admitted;
}

std::vector<std::int64_t> weed_out(const ConfidencePrediction& cp,
                                   const std::vector<std::int64_t>& ids,
                                   PseudoLabelStore& store) {
  check_batch(cp, ids);
  std::vector<std::int64_t> dropped;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = store.entries.find(ids[i]);
    if (it == store.entries.end()) continue;
    double refreshed = cp.confidence(static_cast<Index>(i));
    if (refreshed < store.alpha) {
      store.entries.erase(it);
      dropped.push_back(ids[i]);
    } else {
      it->second.confidence = refreshed;  // keep "last confidence" current
    }
  }
  return dropped;
}

Tensor scl_loss(const Tensor& z, const std::vector<std::optional<int>>& pseudo,
                double tau_i) {
  if (tau_i <= 0.0) throw ContractError("scl_loss: tau must be positive");
  const Index r = z.rows();
  if (r < 2 || r % 2 != 0)
    throw ContractError("scl_loss: expected an even row count >= 2");
  const Index n = r / 2;
  if (static_cast<Index>(pseudo.size()) != n)
    throw ContractError("scl_loss: pseudo label count must equal N");

  // Effective class per view; unlabeled instance i becomes singleton class
  // max_label + 1 + i shared by its two views.
  int base = 0;
  for (const auto& p : pseudo)
    if (p) base = std::max(base, *p + 1);
  std::vector<int> cls(static_cast<std::size_t>(r));
  for (Index i = 0; i < n; ++i) {
    int c = pseudo[static_cast<std::size_t>(i)]
                ? *pseudo[static_cast<std::size_t>(i)]
                : base + static_cast<int>(i);
    cls[static_cast<std::size_t>(2 * i)] = c;
    cls[static_cast<std::size_t>(2 * i + 1)] = c;
  }

  Matrix neg_mask(r, r);
  for (Index i = 0; i < r; ++i)
    for (Index k = 0; k < r; ++k)
      neg_mask(i, k) = cls[static_cast<std::size_t>(k)] !=
                               cls[static_cast<std::size_t>(i)]
                           ? 1.0
                           : 0.0;

  Tensor sim = scale(pairwise_cosine(z), 1.0 / tau_i);
  Vector w = Vector::Constant(r, 1.0 / static_cast<double>(r));
  return detail::nt_xent(sim, detail::interleaved_partner(r), neg_mask, w);
}

SlLossResult sl_loss(const Model& m, const Matrix& x_strong,
                     const std::vector<std::optional<int>>& pseudo) {
  if (static_cast<Index>(pseudo.size()) != x_strong.rows())
    throw ContractError("sl_loss: pseudo label count must match rows");
  const Index cluster_count = m.config.cluster_count;

  std::vector<Index> labeled_rows;
  std::vector<int> labels;
  for (Index i = 0; i < x_strong.rows(); ++i)
    if (pseudo[static_cast<std::size_t>(i)]) {
      int c = *pseudo[static_cast<std::size_t>(i)];
      if (c < 0 || c >= static_cast<int>(cluster_count))
        throw ContractError("sl_loss: pseudo label out of range");
      labeled_rows.push_back(i);
      labels.push_back(c);
    }

  SlLossResult out;
  out.labeled = static_cast<Index>(labeled_rows.size());
  if (labeled_rows.empty()) {
    out.loss = Tensor::constant(Matrix::Zero(1, 1));
    return out;
  }

  Matrix x_sel(out.labeled, x_strong.cols());
  for (Index r = 0; r < out.labeled; ++r)
    x_sel.row(r) = x_strong.row(labeled_rows[static_cast<std::size_t>(r)]);

  std::vector<Index> sizes(static_cast<std::size_t>(cluster_count), 0);
  for (int c : labels) ++sizes[static_cast<std::size_t>(c)];
  const auto n_p = static_cast<double>(out.labeled);

  Tensor h = forward_features(m, Tensor::constant(x_sel));
  Tensor logits = forward_cluster(m, h).logits;

  // Per-row weighted cross-entropy: w_c (lse - logit[c]), mean over rows.
  Matrix pick = Matrix::Zero(out.labeled, cluster_count);
  Matrix row_w(out.labeled, 1);
  for (Index r = 0; r < out.labeled; ++r) {
    int c = labels[static_cast<std::size_t>(r)];
    double w_c = n_p / (static_cast<double>(cluster_count) *
                        static_cast<double>(sizes[static_cast<std::size_t>(c)]));
    pick(r, c) = 1.0;
    row_w(r, 0) = w_c / n_p;
  }
  Tensor lse =
      masked_logsumexp_rows(logits, Matrix::Ones(out.labeled, cluster_count));
  Tensor picked = sum_rows(mul_const(logits, pick));
  out.loss = sum_all(mul_const(sub(lse, picked), row_w));
  return out;
}

Tensor boost_loss(const Tensor& scl, const Tensor& sl) {
  return add(scl, sl);
}

}  // namespace tcl
