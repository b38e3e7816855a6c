#include "tcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>

#include "tcl/errors.hpp"

namespace tcl {

namespace {

struct Contingency {
  std::vector<std::vector<std::int64_t>> counts;  // |A| x |B|
  std::vector<std::int64_t> a_sums, b_sums;
  std::int64_t total = 0;
};

Contingency build_contingency(const std::vector<int>& a,
                              const std::vector<int>& b) {
  if (a.empty() || a.size() != b.size())
    throw ContractError("metrics: label vectors must be nonempty and equal");
  std::map<int, std::size_t> ia, ib;  // ordered -> deterministic compaction
  for (int x : a) ia.emplace(x, 0);
  for (int x : b) ib.emplace(x, 0);
  std::size_t next = 0;
  for (auto& [k, v] : ia) v = next++;
  next = 0;
  for (auto& [k, v] : ib) v = next++;

  Contingency c;
  c.counts.assign(ia.size(), std::vector<std::int64_t>(ib.size(), 0));
  c.a_sums.assign(ia.size(), 0);
  c.b_sums.assign(ib.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t ra = ia[a[i]], rb = ib[b[i]];
    ++c.counts[ra][rb];
    ++c.a_sums[ra];
    ++c.b_sums[rb];
    ++c.total;
  }
  return c;
}

double entropy(const std::vector<std::int64_t>& sums, std::int64_t total) {
  double h = 0.0;
  for (std::int64_t s : sums)
    if (s > 0) {
      double p = static_cast<double>(s) / static_cast<double>(total);
      h -= p * std::log(p);
    }
  return h;
}

// Assignment minimizing total cost on a square matrix; O(n^3) potentials
// method. Returns the column chosen for each row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j)
        if (!used[j]) {
          double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return row_to_col;
}

double comb2(std::int64_t k) {
  return 0.5 * static_cast<double>(k) * static_cast<double>(k - 1);
}

}  // namespace

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  Contingency c = build_contingency(a, b);
  double ha = entropy(c.a_sums, c.total);
  double hb = entropy(c.b_sums, c.total);
  if (ha == 0.0 || hb == 0.0) return 0.0;
  double mi = 0.0;
  auto n = static_cast<double>(c.total);
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    for (std::size_t j = 0; j < c.counts[i].size(); ++j) {
      std::int64_t nij = c.counts[i][j];
      if (nij == 0) continue;
      double pij = static_cast<double>(nij) / n;
      mi += pij * std::log(n * static_cast<double>(nij) /
                           (static_cast<double>(c.a_sums[i]) *
                            static_cast<double>(c.b_sums[j])));
    }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

double clustering_accuracy(const std::vector<int>& pred,
                           const std::vector<int>& truth) {
  Contingency c = build_contingency(pred, truth);
  std::size_t side = std::max(c.counts.size(), c.counts[0].size());
  std::vector<std::vector<double>> cost(side, std::vector<double>(side, 0.0));
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    for (std::size_t j = 0; j < c.counts[i].size(); ++j)
      cost[i][j] = -static_cast<double>(c.counts[i][j]);
  std::vector<int> match = hungarian(cost);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < c.counts.size(); ++i) {
    auto j = static_cast<std::size_t>(match[i]);
    if (j < c.counts[i].size()) hits += c.counts[i][j];
  }
  return static_cast<double>(hits) / static_cast<double>(c.total);
}

double adjusted_rand_index(const std::vector<int>& a,
                           const std::vector<int>& b) {
  Contingency c = build_contingency(a, b);
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : c.counts)
    for (std::int64_t nij : row) index += comb2(nij);
  for (std::int64_t s : c.a_sums) sum_a += comb2(s);
  for (std::int64_t s : c.b_sums) sum_b += comb2(s);
  double c2n = comb2(c.total);
  if (c2n == 0.0) return 1.0;
  double expected = sum_a * sum_b / c2n;
  double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 1.0;  // both partitions trivial
  return (index - expected) / (maximum - expected);
}

double majority_vote_accuracy(const std::vector<int>& pred,
                              const std::vector<int>& truth) {
  Contingency c = build_contingency(pred, truth);
  std::int64_t hits = 0;
  for (const auto& row : c.counts)
    hits += *std::max_element(row.begin(), row.end());
  return static_cast<double>(hits) / static_cast<double>(c.total);
}

}  // namespace tcl
