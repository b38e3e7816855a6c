#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tcl/errors.hpp"
#include "tcl/metrics.hpp"

using namespace tcl;

namespace {

// Plain-formula NMI for a single fixture, written out from the definition.
double nmi_reference(const std::vector<int>& a, const std::vector<int>& b) {
  auto n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    joint[{a[i], b[i]}] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [key, p] : joint)
    mi += p * std::log(p / (pa[key.first] * pb[key.second]));
  double ha = 0.0, hb = 0.0;
  for (const auto& [k, p] : pa) ha -= p * std::log(p);
  for (const auto& [k, p] : pb) hb -= p * std::log(p);
  if (ha == 0.0 || hb == 0.0) return 0.0;
  return mi / std::sqrt(ha * hb);
}

// Pair-counting ARI, straight from the contingency table definition.
double ari_reference(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : joint) sum_ij += choose2(v);
  for (const auto& [k, v] : ra) sum_a += choose2(v);
  for (const auto& [k, v] : rb) sum_b += choose2(v);
  double total = choose2(static_cast<double>(a.size()));
  double expected = sum_a * sum_b / total;
  double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int k) {
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  return v;
}

// Random relabeling: applies an injective map to the label values.
std::vector<int> relabel(const std::vector<int>& v, Rng& rng) {
  std::vector<int> out(v.size());
  int offset = static_cast<int>(rng.below(50));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 7 * v[i] + offset;
  return out;
}

}  // namespace

TEST_CASE("nmi fixtures") {
  std::vector<int> a{0, 0, 1, 1};
  CHECK(nmi(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<int> relabeled{5, 5, 2, 2};
  CHECK(nmi(a, relabeled) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<int> constant{3, 3, 3, 3};
  CHECK(nmi(a, constant) == 0.0);
  CHECK(nmi(constant, a) == 0.0);
  CHECK(nmi(constant, constant) == 0.0);  // 0/0 convention

  std::vector<int> b{0, 1, 1, 1};
  double got = nmi(a, b);
  CHECK(std::abs(got - nmi_reference(a, b)) <= 1e-9);
  CHECK(std::abs(got - nmi(b, a)) <= 1e-12);  // symmetric
  CHECK(got > 0.0);
  CHECK(got < 1.0);
}

TEST_CASE("nmi matches the plain formula on random partitions") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 2 + rng.below(40);
    auto a = random_labels(rng, n, 4);
    auto b = random_labels(rng, n, 3);
    double got = nmi(a, b);
    CHECK(std::abs(got - nmi_reference(a, b)) <= 1e-9);
    CHECK(got >= -1e-12);
    CHECK(got <= 1.0 + 1e-12);
  }
}

TEST_CASE("clustering accuracy fixtures") {
  std::vector<int> a{0, 0, 1, 1};
  std::vector<int> flipped{1, 1, 0, 0};
  CHECK(clustering_accuracy(flipped, a) == doctest::Approx(1.0));
  CHECK(clustering_accuracy(a, a) == doctest::Approx(1.0));
  std::vector<int> alt{0, 1, 0, 1};
  CHECK(clustering_accuracy(alt, a) == doctest::Approx(0.5));

  // More predicted clusters than classes: the map stays one-to-one.
  std::vector<int> pred{0, 1, 2, 2};
  std::vector<int> truth{0, 0, 1, 1};
  CHECK(clustering_accuracy(pred, truth) == doctest::Approx(0.75));
}

TEST_CASE("hungarian accuracy equals exhaustive permutation search") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 2 + rng.below(30);
    int ka = 2 + static_cast<int>(rng.below(4));
    int kb = 2 + static_cast<int>(rng.below(4));
    auto pred = random_labels(rng, n, ka);
    auto truth = random_labels(rng, n, kb);
    double got = clustering_accuracy(pred, truth);
    double want = oracles::accuracy_by_permutation(pred, truth);
    CHECK(std::abs(got - want) <= 1e-9);

    // Never worse than the identity mapping.
    double identity_hits = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (pred[i] == truth[i]) identity_hits += 1.0;
    CHECK(got >= identity_hits / static_cast<double>(n) - 1e-12);
  }
}

TEST_CASE("adjusted rand index fixtures") {
  std::vector<int> a{0, 0, 1, 1};
  CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<int> relabeled{9, 9, 4, 4};
  CHECK(adjusted_rand_index(a, relabeled) ==
        doctest::Approx(1.0).epsilon(1e-12));

  std::vector<int> constant{2, 2, 2, 2};
  CHECK(adjusted_rand_index(constant, a) == doctest::Approx(0.0));
  CHECK(adjusted_rand_index(constant, constant) ==
        doctest::Approx(1.0));  // both trivial: identical partitions

  std::vector<int> b{0, 1, 1, 1};
  double got = adjusted_rand_index(a, b);
  CHECK(std::abs(got - ari_reference(a, b)) <= 1e-9);
}

TEST_CASE("ari matches pair counting on random partitions") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 2 + rng.below(40);
    auto a = random_labels(rng, n, 4);
    auto b = random_labels(rng, n, 3);
    double got = adjusted_rand_index(a, b);
    CHECK(std::abs(got - ari_reference(a, b)) <= 1e-9);
    CHECK(std::abs(got - adjusted_rand_index(b, a)) <= 1e-12);
  }
}

TEST_CASE("majority vote accuracy fixtures") {
  std::vector<int> pred{0, 0, 0};
  std::vector<int> truth{1, 1, 2};
  CHECK(majority_vote_accuracy(pred, truth) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // Two pure predicted clusters per class: many-to-one maps them all home.
  std::vector<int> fine{0, 0, 1, 1, 2, 2};
  std::vector<int> coarse{0, 0, 0, 0, 1, 1};
  CHECK(majority_vote_accuracy(fine, coarse) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // One-to-one can't do that.
  CHECK(clustering_accuracy(fine, coarse) < 1.0);
}

TEST_CASE("majority vote dominates the one-to-one accuracy") {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 4 + rng.below(40);
    auto pred = random_labels(rng, n, 6);
    auto truth = random_labels(rng, n, 3);
    double mva = majority_vote_accuracy(pred, truth);
    double acc = clustering_accuracy(pred, truth);
    CHECK(mva >= acc - 1e-12);
  }
}

TEST_CASE("metrics are invariant under relabeling") {
  Rng rng(11);
  auto pred = random_labels(rng, 60, 4);
  auto truth = random_labels(rng, 60, 4);
  double n0 = nmi(pred, truth);
  double a0 = clustering_accuracy(pred, truth);
  double r0 = adjusted_rand_index(pred, truth);
  double m0 = majority_vote_accuracy(pred, truth);
  for (int rep = 0; rep < 10; ++rep) {
    auto p2 = relabel(pred, rng);
    auto t2 = relabel(truth, rng);
    CHECK(std::abs(nmi(p2, t2) - n0) <= 1e-12);
    CHECK(std::abs(clustering_accuracy(p2, t2) - a0) <= 1e-12);
    CHECK(std::abs(adjusted_rand_index(p2, t2) - r0) <= 1e-12);
    CHECK(std::abs(majority_vote_accuracy(p2, t2) - m0) <= 1e-12);
  }
}

TEST_CASE("metrics reject empty or mismatched inputs") {
  std::vector<int> empty;
  std::vector<int> one{0};
  CHECK_THROWS_AS(nmi(empty, empty), ContractError);
  CHECK_THROWS_AS(nmi(one, empty), ContractError);
  CHECK_THROWS_AS(clustering_accuracy(empty, empty), ContractError);
  CHECK_THROWS_AS(clustering_accuracy(one, empty), ContractError);
  CHECK_THROWS_AS(adjusted_rand_index(empty, empty), ContractError);
  CHECK_THROWS_AS(adjusted_rand_index(one, empty), ContractError);
  CHECK_THROWS_AS(majority_vote_accuracy(empty, empty), ContractError);
  CHECK_THROWS_AS(majority_vote_accuracy(one, empty), ContractError);
}
