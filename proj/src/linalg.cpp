#include "tcl/linalg.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace tcl {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::normal() {
  // u1 in (0, 1] keeps the log finite.
  double u1 = 1.0 - uniform01();
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::below: n must be positive");
  std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
  for (;;) {
    std::uint64_t r = eng_();
    if (r >= threshold) return r % n;
  }
}

std::vector<Index> Rng::permutation(Index n) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) {
    auto j = static_cast<Index>(below(static_cast<std::uint64_t>(i) + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << eng_;
  return out.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r;
  std::istringstream in(text);
  in >> r.eng_;
  if (in.fail()) throw DataError("invalid RNG state string");
  return r;
}

void fill_uniform(Matrix& m, Rng& rng, double lo, double hi) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(lo, hi);
}

void fill_normal(Matrix& m, Rng& rng, double mean, double stddev) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = mean + stddev * rng.normal();
}

}  // namespace tcl
