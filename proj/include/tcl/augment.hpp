#pragma once

#include <cstdint>
#include <vector>

#include "tcl/linalg.hpp"

namespace tcl {

enum class AugFamily { weak, strong };

struct AugmentationSpec {
  AugFamily family = AugFamily::weak;
  // Gaussian noise std, as a multiple of the caller-supplied per-feature
  // scale (pass ones for absolute units).
  double noise_sigma = 0.05;
  // One multiplicative factor u ~ U(-jitter, jitter) per vector.
  double scale_jitter = 0.1;
  // Fraction of coordinates zeroed; exactly round(fraction * d) of them.
  double mask_fraction = 0.0;

  void validate() const;
};

// The weak/strong pair must satisfy: weak masks nothing, strong is at least
// as noisy as weak.
void validate_pair(const AugmentationSpec& weak, const AugmentationSpec& strong);

// One augmented view of x. Draw order is fixed: one jitter uniform, then d
// noise normals, then the masking choices (strong only).
Vector augment(const Eigen::Ref<const Vector>& x, const AugmentationSpec& spec,
               const Vector& noise_scale, Rng& rng);

// A batch with its two views; training consumes the interleaved stack.
struct PairBatch {
  std::vector<std::int64_t> ids;
  Matrix x;       // N x d raw
  Matrix weak;    // N x d
  Matrix strong;  // N x d

  // 2N x d; rows 2i and 2i+1 are the weak and strong views of instance i.
  Matrix interleaved() const;
};

// Draws per instance i: weak view first, then strong view.
PairBatch make_pair_batch(const Matrix& x,
                          const std::vector<std::int64_t>& ids,
                          const AugmentationSpec& weak_spec,
                          const AugmentationSpec& strong_spec,
                          const Vector& noise_scale, Rng& rng);

}  // namespace tcl
