#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcl/tensor.hpp"

namespace tcl {

struct NetworkConfig {
  Index input_dim = 0;
  std::vector<Index> backbone_hidden{256, 128};
  Index feature_dim = 64;
  Index ich_dim = 128;
  Index cluster_count = 0;  // M
  std::uint64_t seed = 0;

  void validate() const;
};

struct LinearLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

// MLP backbone plus instance head (ICH) and cluster head (CCH). Parameter
// ordering is canonical: backbone layers, then ich, then cch; checkpoints
// and the optimizer both rely on it.
struct Model {
  NetworkConfig config;
  std::vector<LinearLayer> backbone;  // hidden layers, then the feature layer
  LinearLayer ich0, ich1;             // feature -> feature -> ich_dim
  LinearLayer cch0, cch1;             // feature -> feature -> cluster_count

  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, drawn
  // row-major in canonical order from config.seed.
  static Model init(const NetworkConfig& config);

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;
  void zero_grad() const;
};

// Graph-building forwards over row-stacked batches (training path).
Tensor forward_features(const Model& m, const Tensor& x);
// ICH output, un-normalized; similarity computations normalize.
Tensor forward_instance(const Model& m, const Tensor& h);
struct ClusterForward {
  Tensor logits;
  Tensor probs;
};
ClusterForward forward_cluster(const Model& m, const Tensor& h);

// Graph-free single-row forward (assignment path). Batched assignment loops
// this function, so batch results are bitwise identical to singleton calls.
struct RowCluster {
  Eigen::RowVectorXd logits;
  Eigen::RowVectorXd probs;
};
RowCluster eval_cluster_row(const Model& m, const Eigen::RowVectorXd& x);

}  // namespace tcl
