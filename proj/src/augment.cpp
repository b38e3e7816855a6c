#include "tcl/augment.hpp"

#include <cmath>
#include <unordered_set>

#include "tcl/errors.hpp"

namespace tcl {

void AugmentationSpec::validate() const {
  if (noise_sigma < 0.0)
    throw ConfigError("augmentation: noise sigma must be >= 0");
  if (scale_jitter < 0.0 || scale_jitter >= 1.0)
    throw ConfigError("augmentation: scale jitter must be in [0, 1)");
  if (mask_fraction < 0.0 || mask_fraction > 1.0)
    throw ConfigError("augmentation: mask fraction must be in [0, 1]");
  if (family == AugFamily::weak && mask_fraction != 0.0)
    throw ConfigError("augmentation: weak family must not mask coordinates");
}

void validate_pair(const AugmentationSpec& weak,
                   const AugmentationSpec& strong) {
  if (weak.family != AugFamily::weak || strong.family != AugFamily::strong)
    throw ConfigError("augmentation: pair must be one weak and one strong spec");
  weak.validate();
  strong.validate();
  if (strong.noise_sigma < weak.noise_sigma)
    throw ConfigError(
        "augmentation: strong noise sigma must be >= weak noise sigma");
}

Vector augment(const Eigen::Ref<const Vector>& x, const AugmentationSpec& spec,
               const Vector& noise_scale, Rng& rng) {
  const Index d = x.size();
  if (noise_scale.size() != d)
    throw ContractError("augment: noise scale length mismatch");
  double u = rng.uniform(-spec.scale_jitter, spec.scale_jitter);
  Vector y = (1.0 + u) * x;
  for (Index j = 0; j < d; ++j)
    y(j) += rng.normal() * spec.noise_sigma * noise_scale(j);
  auto masked = static_cast<Index>(
      std::llround(spec.mask_fraction * static_cast<double>(d)));
  if (masked > 0) {
    // Partial Fisher-Yates: first `masked` slots become the chosen indices.
    std::vector<Index> idx(static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j) idx[static_cast<std::size_t>(j)] = j;
    for (Index i = 0; i < masked; ++i) {
      auto j = i + static_cast<Index>(
                       rng.below(static_cast<std::uint64_t>(d - i)));
      std::swap(idx[static_cast<std::size_t>(i)],
                idx[static_cast<std::size_t>(j)]);
      y(idx[static_cast<std::size_t>(i)]) = 0.0;
    }
  }
  return y;
}

Matrix PairBatch::interleaved() const {
  Matrix out(2 * x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    out.row(2 * i) = weak.row(i);
    out.row(2 * i + 1) = strong.row(i);
  }
  return out;
}

PairBatch make_pair_batch(const Matrix& x,
                          const std::vector<std::int64_t>& ids,
                          const AugmentationSpec& weak_spec,
                          const AugmentationSpec& strong_spec,
                          const Vector& noise_scale, Rng& rng) {
  if (static_cast<Index>(ids.size()) != x.rows())
    throw ContractError("make_pair_batch: id count does not match rows");
  std::unordered_set<std::int64_t> seen;
  for (std::int64_t id : ids)
    if (!seen.insert(id).second)
      throw ContractError("make_pair_batch: duplicate instance id " +
                          std::to_string(id));
  weak_spec.validate();
  strong_spec.validate();
  PairBatch batch;
  batch.ids = ids;
  batch.x = x;
  batch.weak.resize(x.rows(), x.cols());
  batch.strong.resize(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    batch.weak.row(i) =
        augment(x.row(i).transpose(), weak_spec, noise_scale, rng);
    batch.strong.row(i) =
        augment(x.row(i).transpose(), strong_spec, noise_scale, rng);
  }
  return batch;
}

}  // namespace tcl
