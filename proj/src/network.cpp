#include "tcl/network.hpp"

#include <cmath>

#include "tcl/errors.hpp"

namespace tcl {

void NetworkConfig::validate() const {
  if (input_dim < 1) throw ConfigError("network: input_dim must be >= 1");
  if (feature_dim < 1) throw ConfigError("network: feature_dim must be >= 1");
  if (ich_dim < 1) throw ConfigError("network: ich_dim must be >= 1");
  if (cluster_count < 2)
    throw ConfigError("network: cluster_count must be >= 2");
  for (Index h : backbone_hidden)
    if (h < 1) throw ConfigError("network: hidden widths must be >= 1");
}

namespace {

LinearLayer init_layer(Index in, Index out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix w(in, out), b(1, out);
  fill_uniform(w, rng, -bound, bound);
  fill_uniform(b, rng, -bound, bound);
  return {Tensor::parameter(std::move(w)), Tensor::parameter(std::move(b))};
}

Tensor linear(const LinearLayer& layer, const Tensor& x) {
  return add_row_broadcast(matmul(x, layer.weight), layer.bias);
}

void push_layer(const LinearLayer& layer, std::vector<Tensor>& out) {
  out.push_back(layer.weight);
  out.push_back(layer.bias);
}

}  // namespace

Model Model::init(const NetworkConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Model m;
  m.config = config;
  std::vector<Index> dims;
  dims.push_back(config.input_dim);
  dims.insert(dims.end(), config.backbone_hidden.begin(),
              config.backbone_hidden.end());
  dims.push_back(config.feature_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    m.backbone.push_back(init_layer(dims[i], dims[i + 1], rng));
  m.ich0 = init_layer(config.feature_dim, config.feature_dim, rng);
  m.ich1 = init_layer(config.feature_dim, config.ich_dim, rng);
  m.cch0 = init_layer(config.feature_dim, config.feature_dim, rng);
  m.cch1 = init_layer(config.feature_dim, config.cluster_count, rng);
  return m;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (const LinearLayer& layer : backbone) push_layer(layer, out);
  push_layer(ich0, out);
  push_layer(ich1, out);
  push_layer(cch0, out);
  push_layer(cch1, out);
  return out;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    names.push_back("backbone." + std::to_string(i) + ".weight");
    names.push_back("backbone." + std::to_string(i) + ".bias");
  }
  for (const char* head : {"ich", "cch"})
    for (int i = 0; i < 2; ++i) {
      names.push_back(std::string(head) + "." + std::to_string(i) + ".weight");
      names.push_back(std::string(head) + "." + std::to_string(i) + ".bias");
    }
  return names;
}

void Model::zero_grad() const {
  for (Tensor p : parameters()) p.zero_grad();
}

Tensor forward_features(const Model& m, const Tensor& x) {
  if (x.cols() != m.config.input_dim)
    throw DataError("forward: input has " + std::to_string(x.cols()) +
                    " features, model expects " +
                    std::to_string(m.config.input_dim));
  Tensor y = x;
  for (std::size_t i = 0; i < m.backbone.size(); ++i) {
    y = linear(m.backbone[i], y);
    if (i + 1 < m.backbone.size()) y = relu(y);
  }
  return y;
}

Tensor forward_instance(const Model& m, const Tensor& h) {
  return linear(m.ich1, relu(linear(m.ich0, h)));
}

ClusterForward forward_cluster(const Model& m, const Tensor& h) {
  Tensor logits = linear(m.cch1, relu(linear(m.cch0, h)));
  return {logits, softmax_rows(logits)};
}

namespace {

Eigen::RowVectorXd eval_linear(const LinearLayer& layer,
                               const Eigen::RowVectorXd& x) {
  return x * layer.weight.value() + layer.bias.value().row(0);
}

}  // namespace

RowCluster eval_cluster_row(const Model& m, const Eigen::RowVectorXd& x) {
  if (x.cols() != m.config.input_dim)
    throw DataError("assign: input has " + std::to_string(x.cols()) +
                    " features, model expects " +
                    std::to_string(m.config.input_dim));
  Eigen::RowVectorXd y = x;
  for (std::size_t i = 0; i < m.backbone.size(); ++i) {
    y = eval_linear(m.backbone[i], y);
    if (i + 1 < m.backbone.size()) y = y.cwiseMax(0.0);
  }
  y = eval_linear(m.cch0, y).cwiseMax(0.0);
  RowCluster out;
  out.logits = eval_linear(m.cch1, y);
  double mx = out.logits.maxCoeff();
  out.probs = (out.logits.array() - mx).exp().matrix();
  out.probs /= out.probs.sum();
  if (!out.logits.allFinite() || !out.probs.allFinite())
    throw NumericError("assign: non-finite network output");
  return out;
}

}  // namespace tcl
