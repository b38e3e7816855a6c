#include "tcl/engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "tcl/errors.hpp"
#include "tcl/losses.hpp"
#include "tcl/metrics.hpp"

namespace tcl {

using ordered_json = nlohmann::ordered_json;

RunConfig::RunConfig() {
  weak.family = AugFamily::weak;
  weak.noise_sigma = 0.05;
  weak.scale_jitter = 0.1;
  weak.mask_fraction = 0.0;
  strong.family = AugFamily::strong;
  strong.noise_sigma = 0.1;
  strong.scale_jitter = 0.1;
  strong.mask_fraction = 0.25;
}

void RunConfig::validate() const {
  if (clusters < 2) throw ConfigError("config: clusters must be set (>= 2)");
  if (batch_size < 2) throw ConfigError("config: batch-size must be >= 2");
  if (epochs_train < 0 || epochs_boost < 0)
    throw ConfigError("config: epoch counts must be >= 0");
  if (!(learning_rate > 0.0))
    throw ConfigError("config: learning-rate must be positive");
  if (weight_decay < 0.0)
    throw ConfigError("config: weight-decay must be >= 0");
  if (!(tau_i > 0.0) || !(tau_c > 0.0))
    throw ConfigError("config: temperatures must be positive");
  PseudoLabelStore probe;
  probe.gamma = gamma;
  probe.alpha = alpha;
  probe.validate();
  for (Index h : hidden)
    if (h < 1) throw ConfigError("config: hidden widths must be >= 1");
  if (feature_dim < 1 || ich_dim < 1)
    throw ConfigError("config: head dimensions must be >= 1");
  if (overcluster_factor < 2)
    throw ConfigError("config: overcluster-factor must be >= 2");
  if (selection_batch < 0)
    throw ConfigError("config: selection-batch-size must be >= 0");
  validate_pair(weak, strong);
}

Index RunConfig::effective_clusters() const {
  return mode == AblationMode::overcluster ? clusters * overcluster_factor
                                           : clusters;
}

NetworkConfig RunConfig::network(Index input_dim) const {
  NetworkConfig net;
  net.input_dim = input_dim;
  net.backbone_hidden = hidden;
  net.feature_dim = feature_dim;
  net.ich_dim = ich_dim;
  net.cluster_count = effective_clusters();
  net.seed = derive_seed(seed, 0);
  return net;
}

// --- config parsing --------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || p != value.data() + value.size())
    throw ConfigError("config: invalid value for '" + key + "': '" + value +
                      "'");
  return v;
}

std::vector<Index> parse_index_list(const std::string& key,
                                    const std::string& value) {
  std::vector<Index> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_number<Index>(key, trim(item)));
  if (out.empty())
    throw ConfigError("config: '" + key + "' needs at least one entry");
  return out;
}

AblationMode parse_mode(const std::string& value) {
  if (value == "standard") return AblationMode::standard;
  if (value == "shared-head") return AblationMode::shared_head;
  if (value == "weak-weak") return AblationMode::weak_weak;
  if (value == "strong-strong") return AblationMode::strong_strong;
  if (value == "overcluster") return AblationMode::overcluster;
  throw ConfigError("config: unknown ablation-mode '" + value + "'");
}

}  // namespace

void apply_config_entry(RunConfig& config, const std::string& key,
                        const std::string& value) {
  if (key == "clusters")
    config.clusters = parse_number<Index>(key, value);
  else if (key == "batch-size")
    config.batch_size = parse_number<Index>(key, value);
  else if (key == "epochs-train")
    config.epochs_train = parse_number<std::int64_t>(key, value);
  else if (key == "epochs-boost")
    config.epochs_boost = parse_number<std::int64_t>(key, value);
  else if (key == "learning-rate")
    config.learning_rate = parse_number<double>(key, value);
  else if (key == "weight-decay")
    config.weight_decay = parse_number<double>(key, value);
  else if (key == "tau-i")
    config.tau_i = parse_number<double>(key, value);
  else if (key == "tau-c")
    config.tau_c = parse_number<double>(key, value);
  else if (key == "gamma")
    config.gamma = parse_number<double>(key, value);
  else if (key == "alpha")
    config.alpha = parse_number<double>(key, value);
  else if (key == "seed")
    config.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "hidden")
    config.hidden = parse_index_list(key, value);
  else if (key == "feature-dim")
    config.feature_dim = parse_number<Index>(key, value);
  else if (key == "ich-dim")
    config.ich_dim = parse_number<Index>(key, value);
  else if (key == "weak-noise-sigma")
    config.weak.noise_sigma = parse_number<double>(key, value);
  else if (key == "weak-scale-jitter")
    config.weak.scale_jitter = parse_number<double>(key, value);
  else if (key == "strong-noise-sigma")
    config.strong.noise_sigma = parse_number<double>(key, value);
  else if (key == "strong-scale-jitter")
    config.strong.scale_jitter = parse_number<double>(key, value);
  else if (key == "strong-mask-fraction")
    config.strong.mask_fraction = parse_number<double>(key, value);
  else if (key == "ablation-mode")
    config.mode = parse_mode(value);
  else if (key == "overcluster-factor")
    config.overcluster_factor = parse_number<Index>(key, value);
  else if (key == "selection-batch-size")
    config.selection_batch = parse_number<Index>(key, value);
  else if (key == "boost-variant") {
    if (value == "scl+sl")
      config.boost_variant = BoostVariant::scl_and_sl;
    else if (value == "sl")
      config.boost_variant = BoostVariant::sl_only;
    else
      throw ConfigError("config: unknown boost-variant '" + value + "'");
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

RunConfig parse_run_config_text(const std::string& text,
                                const std::string& origin) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + " line " + std::to_string(line_no) +
                        ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + " line " + std::to_string(line_no) +
                        ": empty key");
    if (!seen.insert(key).second)
      throw ConfigError(origin + " line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    apply_config_entry(config, key, value);
  }
  config.validate();
  return config;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config_text(buffer.str(), path);
}

// --- reports ---------------------------------------------------------------

namespace {

ordered_json report_json(const Report& r) {
  ordered_json j;
  j["metrics"] = ordered_json::object();
  for (const auto& [k, v] : r.metrics) j["metrics"][k] = v;
  j["cluster_sizes"] = r.cluster_sizes;
  j["train_history"] = ordered_json::array();
  for (const EpochLoss& e : r.train_history)
    j["train_history"].push_back({{"instance", e.instance},
                                  {"cluster", e.cluster},
                                  {"entropy", e.entropy},
                                  {"total", e.total}});
  j["boost_history"] = ordered_json::array();
  for (const BoostEpochLoss& e : r.boost_history)
    j["boost_history"].push_back({{"scl", e.scl},
                                  {"sl", e.sl},
                                  {"total", e.total},
                                  {"pseudo_labels", e.store_size}});
  if (!r.first_epoch_store_sizes.empty())
    j["first_epoch_store_sizes"] = r.first_epoch_store_sizes;
  j["seconds"] = r.seconds;
  return j;
}

std::string format_metric(double v) {
  std::ostringstream out;
  out.precision(9);
  out << v;
  return out.str();
}

}  // namespace

std::string Report::to_text() const {
  std::ostringstream out;
  out << "tcl-report 1\n";
  for (const auto& [k, v] : metrics)
    out << "metric " << k << " " << format_metric(v) << "\n";
  if (!cluster_sizes.empty()) {
    out << "cluster-sizes";
    for (std::int64_t s : cluster_sizes) out << " " << s;
    out << "\n";
  }
  if (!boost_history.empty())
    out << "pseudo-labels " << boost_history.back().store_size << "\n";
  out << "seconds " << format_metric(seconds) << "\n";
  out << "json " << report_json(*this).dump() << "\n";
  return out.str();
}

// --- training --------------------------------------------------------------

namespace {

struct HeadOutputs {
  Tensor z;
  Tensor probs;
};

HeadOutputs forward_heads(const Model& model, AblationMode mode,
                          const Tensor& stacked) {
  Tensor h = forward_features(model, stacked);
  Tensor probs = forward_cluster(model, h).probs;
  Tensor z = mode == AblationMode::shared_head ? probs
                                               : forward_instance(model, h);
  return {z, probs};
}

// Even/odd row pickers for an interleaved 2N stack.
std::vector<Index> stride_rows(Index n, Index offset) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    rows[static_cast<std::size_t>(i)] = 2 * i + offset;
  return rows;
}

struct BatchSlice {
  Matrix x;
  std::vector<std::int64_t> ids;
};

BatchSlice slice_batch(const Dataset& ds, const std::vector<Index>& order,
                       std::size_t start, std::size_t len) {
  BatchSlice b;
  b.x.resize(static_cast<Index>(len), ds.dim());
  b.ids.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    Index row = order[start + i];
    b.x.row(static_cast<Index>(i)) = ds.x.row(row);
    b.ids.push_back(ds.ids[static_cast<std::size_t>(row)]);
  }
  return b;
}

Checkpoint make_checkpoint(const Model& model, const AdamState& adam,
                           const PseudoLabelStore& store,
                           const std::string& rng_state,
                           std::int64_t epochs_trained,
                           std::int64_t epochs_boosted) {
  Checkpoint ck;
  ck.network = model.config;
  std::vector<Tensor> params = model.parameters();
  std::vector<std::string> names = model.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i)
    ck.params.push_back({names[i], params[i].value()});
  ck.adam_config = adam.config();
  ck.adam_step = adam.step_count();
  ck.adam_m = adam.first_moments();
  ck.adam_v = adam.second_moments();
  ck.store = store;
  ck.rng_state = rng_state;
  ck.epochs_trained = epochs_trained;
  ck.epochs_boosted = epochs_boosted;
  return ck;
}

void check_dataset_for_run(const RunConfig& config, const Dataset& ds) {
  ds.validate();
  if (ds.n() < config.effective_clusters())
    throw ConfigError("config: dataset has fewer rows than clusters");
  if (ds.n() < 2) throw ConfigError("config: need at least two rows");
}

double scalar(const Tensor& t) { return t.value()(0, 0); }

double since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void merge_eval(Report& report, const Model& model, const Dataset& ds) {
  Report eval_report = evaluate(model, ds);
  report.metrics = eval_report.metrics;
  report.cluster_sizes = eval_report.cluster_sizes;
}

}  // namespace

TrainResult run_training(const RunConfig& config, const Dataset& ds) {
  config.validate();
  check_dataset_for_run(config, ds);
  const AugmentationSpec& view1 =
      config.mode == AblationMode::strong_strong ? config.strong : config.weak;
  const AugmentationSpec& view2 =
      config.mode == AblationMode::weak_weak ? config.weak : config.strong;

  Model model = Model::init(config.network(ds.dim()));
  std::vector<Tensor> params = model.parameters();
  AdamState adam(params, {config.learning_rate, 0.9, 0.999, 1e-8,
                          config.weight_decay});
  Rng rng(derive_seed(config.seed, 1));
  const Vector noise_scale = ds.feature_std();
  const auto n = static_cast<std::size_t>(ds.n());
  const auto batch = static_cast<std::size_t>(config.batch_size);

  Report report;
  auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t epoch = 1; epoch <= config.epochs_train; ++epoch) {
    std::vector<Index> order = rng.permutation(ds.n());
    EpochLoss sums;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      std::size_t len = std::min(batch, n - start);
      if (len < 2) continue;  // a singleton batch has no contrastive pairs
      BatchSlice bs = slice_batch(ds, order, start, len);
      PairBatch pb =
          make_pair_batch(bs.x, bs.ids, view1, view2, noise_scale, rng);
      try {
        Tensor stacked = Tensor::constant(pb.interleaved());
        HeadOutputs heads = forward_heads(model, config.mode, stacked);
        Index half = static_cast<Index>(len);
        Tensor y_weak = gather_rows(heads.probs, stride_rows(half, 0));
        Tensor y_strong = gather_rows(heads.probs, stride_rows(half, 1));
        TwinLossBreakdown twin = twin_loss(heads.z, y_weak, y_strong,
                                           config.tau_i, config.tau_c);
        model.zero_grad();
        backward(twin.total);
        adam.step(params);
        sums.instance += scalar(twin.instance);
        sums.cluster += scalar(twin.cluster);
        sums.entropy += twin.entropy;
        sums.total += scalar(twin.total);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1) + ": " + e.what());
      }
      ++batches;
    }
    if (batches > 0) {
      auto div = static_cast<double>(batches);
      sums.instance /= div;
      sums.cluster /= div;
      sums.entropy /= div;
      sums.total /= div;
    }
    report.train_history.push_back(sums);
  }

  merge_eval(report, model, ds);
  report.seconds = since(t0);
  PseudoLabelStore store;
  store.gamma = config.gamma;
  store.alpha = config.alpha;
  Checkpoint ck = make_checkpoint(model, adam, store, rng.serialize(),
                                  config.epochs_train, 0);
  return {std::move(ck), std::move(report)};
}

TrainResult run_boosting(const RunConfig& config, const Checkpoint& ck,
                         const Dataset& ds) {
  config.validate();
  Model model = build_model(ck);
  check_dataset_for_run(config, ds);
  if (ds.dim() != model.config.input_dim)
    throw DataError("dataset has " + std::to_string(ds.dim()) +
                    " features, checkpoint expects " +
                    std::to_string(model.config.input_dim));
  const Index m_clusters = model.config.cluster_count;
  const AugmentationSpec& view1 =
      config.mode == AblationMode::strong_strong ? config.strong : config.weak;
  const AugmentationSpec& view2 =
      config.mode == AblationMode::weak_weak ? config.weak : config.strong;

  std::vector<Tensor> params = model.parameters();
  AdamState adam(params, {config.learning_rate, 0.9, 0.999, 1e-8,
                          config.weight_decay});
  adam.restore(ck.adam_step, ck.adam_m, ck.adam_v);
  PseudoLabelStore store = ck.store;
  store.gamma = config.gamma;
  store.alpha = config.alpha;
  Rng rng = ck.rng_state.empty() ? Rng(derive_seed(config.seed, 1))
                                 : Rng::deserialize(ck.rng_state);
  const Vector noise_scale = ds.feature_std();
  const auto n = static_cast<std::size_t>(ds.n());
  const auto batch = static_cast<std::size_t>(config.batch_size);

  Report report;
  auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t epoch = 1; epoch <= config.epochs_boost; ++epoch) {
    if (config.selection_batch > 0) {
      // Chunked refresh pass in dataset order; batches then train against a
      // store that is frozen for the epoch.
      const auto chunk = static_cast<std::size_t>(config.selection_batch);
      std::vector<Index> id_order(n);
      for (std::size_t i = 0; i < n; ++i)
        id_order[i] = static_cast<Index>(i);
      for (std::size_t start = 0; start < n; start += chunk) {
        std::size_t len = std::min(chunk, n - start);
        BatchSlice bs = slice_batch(ds, id_order, start, len);
        ConfidencePrediction cp = predict_confidence(model, bs.x);
        weed_out(cp, bs.ids, store);
        select_pseudo_labels(cp, bs.ids, m_clusters, store);
      }
    }

    std::vector<Index> order = rng.permutation(ds.n());
    BoostEpochLoss sums;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      std::size_t len = std::min(batch, n - start);
      if (len < 2) continue;
      BatchSlice bs = slice_batch(ds, order, start, len);
      PairBatch pb =
          make_pair_batch(bs.x, bs.ids, view1, view2, noise_scale, rng);
      try {
        ConfidencePrediction cp = predict_confidence(model, pb.x);
        if (config.selection_batch == 0) {
          weed_out(cp, pb.ids, store);
          select_pseudo_labels(cp, pb.ids, m_clusters, store);
        }
        std::vector<std::optional<int>> pseudo;
        pseudo.reserve(pb.ids.size());
        for (std::int64_t id : pb.ids) pseudo.push_back(store.label_of(id));

        Tensor stacked = Tensor::constant(pb.interleaved());
        HeadOutputs heads = forward_heads(model, config.mode, stacked);
        Tensor scl = scl_loss(heads.z, pseudo, config.tau_i);
        SlLossResult sl = sl_loss(model, pb.strong, pseudo);
        Tensor total = config.boost_variant == BoostVariant::sl_only
                           ? sl.loss
                           : boost_loss(scl, sl.loss);
        if (total.requires_grad()) {
          model.zero_grad();
          backward(total);
          adam.step(params);
        }
        sums.scl += scalar(scl);
        sums.sl += scalar(sl.loss);
        sums.total += scalar(total);
        if (epoch == 1)
          report.first_epoch_store_sizes.push_back(
              static_cast<std::int64_t>(store.entries.size()));
      } catch (const NumericError& e) {
        throw NumericError("boosting aborted at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1) + ": " + e.what());
      }
      ++batches;
    }
    if (batches > 0) {
      auto div = static_cast<double>(batches);
      sums.scl /= div;
      sums.sl /= div;
      sums.total /= div;
    }
    sums.store_size = static_cast<std::int64_t>(store.entries.size());
    report.boost_history.push_back(sums);
  }

  merge_eval(report, model, ds);
  report.seconds = since(t0);
  Checkpoint out = make_checkpoint(model, adam, store, rng.serialize(),
                                   ck.epochs_trained,
                                   ck.epochs_boosted + config.epochs_boost);
  return {std::move(out), std::move(report)};
}

// --- assignment and evaluation ---------------------------------------------

std::pair<int, double> assign_one(const Model& m,
                                  const Eigen::RowVectorXd& x) {
  RowCluster rc = eval_cluster_row(m, x);
  int best = 0;
  for (Index j = 1; j < rc.probs.cols(); ++j)
    if (rc.probs(j) > rc.probs(best)) best = static_cast<int>(j);
  return {best, rc.probs(best)};
}

std::vector<Assignment> assign_all(const Model& m, const Dataset& ds) {
  ds.validate();
  std::vector<Assignment> out;
  out.reserve(static_cast<std::size_t>(ds.n()));
  for (Index i = 0; i < ds.n(); ++i) {
    auto [label, confidence] = assign_one(m, ds.x.row(i));
    out.push_back({ds.ids[static_cast<std::size_t>(i)], label, confidence});
  }
  return out;
}

Report evaluate(const Model& m, const Dataset& ds) {
  Report report;
  auto t0 = std::chrono::steady_clock::now();
  std::vector<Assignment> assignments = assign_all(m, ds);
  std::vector<int> pred;
  pred.reserve(assignments.size());
  double conf_sum = 0.0;
  report.cluster_sizes.assign(
      static_cast<std::size_t>(m.config.cluster_count), 0);
  for (const Assignment& a : assignments) {
    pred.push_back(a.label);
    conf_sum += a.confidence;
    ++report.cluster_sizes[static_cast<std::size_t>(a.label)];
  }
  report.metrics["mean-confidence"] =
      conf_sum / static_cast<double>(assignments.size());
  if (ds.has_labels()) {
    report.metrics["nmi"] = nmi(pred, ds.labels);
    report.metrics["acc"] = clustering_accuracy(pred, ds.labels);
    report.metrics["ari"] = adjusted_rand_index(pred, ds.labels);
    report.metrics["majority-vote-acc"] =
        majority_vote_accuracy(pred, ds.labels);
  }
  report.seconds = since(t0);
  return report;
}

// --- ablations ---------------------------------------------------------------

namespace {

AblationEntry train_variant(RunConfig config, AblationMode mode,
                            const std::string& name, const Dataset& ds) {
  config.mode = mode;
  TrainResult result = run_training(config, ds);
  return {name, std::move(result.report)};
}

}  // namespace

std::string AblationResult::to_text() const {
  std::ostringstream out;
  out << "tcl-ablate-report 1\n";
  out << "mode " << mode << "\n";
  ordered_json j;
  j["mode"] = mode;
  j["variants"] = ordered_json::object();
  for (const AblationEntry& entry : entries) {
    out << "variant " << entry.name << "\n";
    for (const auto& [k, v] : entry.report.metrics)
      out << "metric " << k << " " << format_metric(v) << "\n";
    j["variants"][entry.name] = report_json(entry.report);
  }
  if (mode == "overcluster")
    out << "dominance majority-vote " << (dominance_ok ? "PASS" : "FAIL")
        << "\n";
  j["dominance_ok"] = dominance_ok;
  out << "json " << j.dump() << "\n";
  return out.str();
}

AblationResult run_ablation(const RunConfig& config, const Dataset& ds,
                            const std::string& mode_name) {
  AblationResult result;
  result.mode = mode_name;
  if (mode_name == "augmentation") {
    result.entries.push_back(
        train_variant(config, AblationMode::weak_weak, "weak+weak", ds));
    result.entries.push_back(
        train_variant(config, AblationMode::standard, "weak+strong", ds));
    result.entries.push_back(train_variant(
        config, AblationMode::strong_strong, "strong+strong", ds));
  } else if (mode_name == "decoupling") {
    result.entries.push_back(
        train_variant(config, AblationMode::standard, "two-heads", ds));
    result.entries.push_back(
        train_variant(config, AblationMode::shared_head, "shared-head", ds));
  } else if (mode_name == "overcluster") {
    result.entries.push_back(
        train_variant(config, AblationMode::standard, "standard", ds));
    AblationEntry over =
        train_variant(config, AblationMode::overcluster, "overcluster", ds);
    if (ds.has_labels()) {
      double acc = over.report.metrics.at("acc");
      double mv = over.report.metrics.at("majority-vote-acc");
      result.dominance_ok = mv >= acc - 1e-12;
    }
    result.entries.push_back(std::move(over));
  } else if (mode_name == "boosting") {
    TrainResult base = run_training(config, ds);
    result.entries.push_back({"none", base.report});
    RunConfig sl_config = config;
    sl_config.boost_variant = BoostVariant::sl_only;
    result.entries.push_back(
        {"sl", run_boosting(sl_config, base.checkpoint, ds).report});
    RunConfig full_config = config;
    full_config.boost_variant = BoostVariant::scl_and_sl;
    result.entries.push_back(
        {"sl+scl", run_boosting(full_config, base.checkpoint, ds).report});
  } else {
    throw ConfigError("ablate: unknown mode '" + mode_name +
                      "' (expected augmentation, decoupling, overcluster, or "
                      "boosting)");
  }
  return result;
}

}  // namespace tcl
