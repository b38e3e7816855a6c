#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tcl/boosting.hpp"
#include "tcl/linalg.hpp"
#include "tcl/network.hpp"
#include "tcl/tensor.hpp"

namespace tcl {

struct Dataset {
  Matrix x;
  std::vector<int> labels;        // empty when the source had none
  std::vector<std::int64_t> ids;  // row index unless the source had ids

  bool has_labels() const { return !labels.empty(); }
  Index n() const { return x.rows(); }
  Index dim() const { return x.cols(); }
  // Per-feature population standard deviation (augmentation noise scale).
  Vector feature_std() const;
  void validate() const;
};

// K isotropic Gaussian clusters with unit within-cluster std and centers
// kept pairwise >= separation apart (rejection-sampled; the sampling scale
// targets typical nearest-center distances of about 1.5x the floor).
// Cluster sizes differ by at most one; rows are grouped by cluster.
Dataset generate_blobs(int k, Index n, Index d, double separation,
                       std::uint64_t seed);

enum class VectorFormat { csv, jsonl };
VectorFormat parse_format(const std::string& name);

Dataset load_vectors(const std::string& path, VectorFormat format);
Dataset parse_vectors(std::istream& in, VectorFormat format,
                      const std::string& origin);
void save_vectors(const Dataset& ds, const std::string& path,
                  VectorFormat format);

// One JSONL record {"x": [...], "id": ..., "label": ...}; used both by the
// bulk loader and by streaming assignment.
struct VectorRecord {
  Vector x;
  std::optional<std::int64_t> id;
  std::optional<int> label;
};
VectorRecord parse_jsonl_record(const std::string& line,
                                const std::string& origin,
                                std::size_t line_no);

// --- checkpoints -----------------------------------------------------------

struct NamedMatrix {
  std::string name;
  Matrix value;
};

// Complete training state: model parameters, optimizer moments, pseudo-label
// memory, and the data-order RNG. Serialized as JSON with base64 payloads;
// save -> load -> save is byte-identical.
struct Checkpoint {
  int version = 1;
  NetworkConfig network;
  std::vector<NamedMatrix> params;
  AdamConfig adam_config;
  std::int64_t adam_step = 0;
  std::vector<Matrix> adam_m, adam_v;  // aligned with params
  PseudoLabelStore store;
  std::string rng_state;  // empty before any training
  std::int64_t epochs_trained = 0;
  std::int64_t epochs_boosted = 0;
};

std::string checkpoint_to_string(const Checkpoint& ck);
Checkpoint checkpoint_from_string(const std::string& text,
                                  const std::string& origin);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Expected (name, rows, cols) sequence for a configuration, in canonical
// parameter order; checkpoint validation is driven by it.
struct ParamShape {
  std::string name;
  Index rows, cols;
};
std::vector<ParamShape> parameter_shapes(const NetworkConfig& config);

// Rebuilds a Model whose tensors hold the checkpoint's parameter values.
Model build_model(const Checkpoint& ck);

// Endless deterministic shuffled pass over a dataset; reshuffles between
// passes. The dataset must outlive the source.
class StreamSource {
 public:
  StreamSource(const Dataset& ds, std::uint64_t seed);
  std::pair<std::int64_t, Vector> next();
  std::int64_t passes() const { return passes_; }

 private:
  const Dataset* ds_;
  Rng rng_;
  std::vector<Index> order_;
  std::size_t pos_ = 0;
  std::int64_t passes_ = 0;
};

// --- encoding helpers (exposed for tests) ----------------------------------

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);
std::uint64_t fnv1a64(const unsigned char* data, std::size_t len);
// Row-major little-endian doubles <-> base64.
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(const std::string& b64, Index rows, Index cols);

}  // namespace tcl
