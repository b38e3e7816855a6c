#pragma once

#include <vector>

namespace tcl {

// Normalized mutual information with sqrt normalization; 0 when either
// partition carries no information (0/0 := 0).
double nmi(const std::vector<int>& a, const std::vector<int>& b);

// Clustering accuracy under the best one-to-one cluster-to-class map
// (Hungarian assignment on the contingency table, square-padded).
double clustering_accuracy(const std::vector<int>& pred,
                           const std::vector<int>& truth);

// Adjusted Rand index; 1 for identical partitions, ~0 for independent ones.
double adjusted_rand_index(const std::vector<int>& a,
                           const std::vector<int>& b);

// Accuracy under the best many-to-one map (each predicted cluster votes for
// its dominant class). Never below clustering_accuracy.
double majority_vote_accuracy(const std::vector<int>& pred,
                              const std::vector<int>& truth);

}  // namespace tcl
