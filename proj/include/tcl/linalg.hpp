#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tcl/errors.hpp"

namespace tcl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// splitmix64 finalizer over (seed, stream); gives independent consumers
// (init, shuffling, augmentation) disjoint sequences from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic RNG. mt19937_64 core with hand-rolled distribution
// transforms, so identical seeds give identical draws on every platform and
// standard library. State round-trips through a decimal string.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal, Box-Muller cosine branch. Two uniforms per call; no
  // cached spare, so the full generator state lives in the engine.
  double normal();

  // Uniform integer in [0, n); rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates permutation of [0, n).
  std::vector<Index> permutation(Index n);

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const { return eng_ == other.eng_; }

 private:
  std::mt19937_64 eng_;
};

// Row-major deterministic fills (Eigen storage order never matters here).
void fill_uniform(Matrix& m, Rng& rng, double lo, double hi);
void fill_normal(Matrix& m, Rng& rng, double mean, double stddev);

}  // namespace tcl
