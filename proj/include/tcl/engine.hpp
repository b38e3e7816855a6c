#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tcl/augment.hpp"
#include "tcl/boosting.hpp"
#include "tcl/data.hpp"
#include "tcl/network.hpp"

namespace tcl {

enum class AblationMode {
  standard,
  shared_head,    // instance-level contrast routed through CCH probabilities
  weak_weak,      // both views weakly augmented
  strong_strong,  // both views strongly augmented
  overcluster     // CCH widened to clusters * overcluster_factor
};

enum class BoostVariant { scl_and_sl, sl_only };

struct RunConfig {
  Index clusters = 0;  // required
  Index batch_size = 256;
  std::int64_t epochs_train = 100;
  std::int64_t epochs_boost = 20;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double tau_i = 0.5;
  double tau_c = 1.0;
  double gamma = 0.5;
  double alpha = 0.99;
  std::uint64_t seed = 1;
  std::vector<Index> hidden{256, 128};
  Index feature_dim = 64;
  Index ich_dim = 128;
  AugmentationSpec weak;
  AugmentationSpec strong;
  AblationMode mode = AblationMode::standard;
  Index overcluster_factor = 2;
  // 0: pseudo-label selection runs per training batch; > 0: a chunked
  // selection pass of this size refreshes the store at each epoch start.
  Index selection_batch = 0;
  BoostVariant boost_variant = BoostVariant::scl_and_sl;

  RunConfig();
  void validate() const;
  Index effective_clusters() const;
  NetworkConfig network(Index input_dim) const;
};

// Flat key=value config text; '#' starts a comment. Unknown or duplicate
// keys are config errors.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text,
                                const std::string& origin);
// Applies one entry; shared by the file parser and the python bindings.
void apply_config_entry(RunConfig& config, const std::string& key,
                        const std::string& value);

struct EpochLoss {
  double instance = 0.0, cluster = 0.0, entropy = 0.0, total = 0.0;
};

struct BoostEpochLoss {
  double scl = 0.0, sl = 0.0, total = 0.0;
  std::int64_t store_size = 0;  // pseudo labels held at epoch end
};

struct Report {
  std::map<std::string, double> metrics;
  std::vector<EpochLoss> train_history;
  std::vector<BoostEpochLoss> boost_history;
  // Store size after each batch of the first boosting epoch (the selection
  // ramp-up trajectory).
  std::vector<std::int64_t> first_epoch_store_sizes;
  std::vector<std::int64_t> cluster_sizes;
  double seconds = 0.0;

  // One "metric <name> <value>" line per metric plus a single-line JSON
  // record carrying everything, prefixed "json ".
  std::string to_text() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  Report report;
};

// Algorithm stage 1: twin contrastive training from scratch.
TrainResult run_training(const RunConfig& config, const Dataset& ds);

// Algorithm stage 2: confidence-based boosting on top of a checkpoint.
// Optimizer moments, pseudo-label memory, and the data-order RNG resume
// from the checkpoint.
TrainResult run_boosting(const RunConfig& config, const Checkpoint& ck,
                         const Dataset& ds);

struct Assignment {
  std::int64_t id = 0;
  int label = 0;
  double confidence = 0.0;
};

// Hard assignment plus confidence for one instance.
std::pair<int, double> assign_one(const Model& m,
                                  const Eigen::RowVectorXd& x);
std::vector<Assignment> assign_all(const Model& m, const Dataset& ds);

// Metrics against ground truth when the dataset has labels; cluster sizes
// always.
Report evaluate(const Model& m, const Dataset& ds);

struct AblationEntry {
  std::string name;
  Report report;
};

struct AblationResult {
  std::string mode;
  std::vector<AblationEntry> entries;
  // Overcluster mode checks that majority-vote accuracy dominates the
  // one-to-one accuracy; other modes leave this true.
  bool dominance_ok = true;

  std::string to_text() const;
};

// mode_name: augmentation | decoupling | overcluster | boosting.
AblationResult run_ablation(const RunConfig& config, const Dataset& ds,
                            const std::string& mode_name);

}  // namespace tcl
