#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tcl/boosting.hpp"
#include "tcl/errors.hpp"
#include "tcl/losses.hpp"
#include "tcl/network.hpp"

using namespace tcl;

namespace {

// All layers identity, all biases zero: cluster logits equal the (positive)
// input row, so softmax(x) is directly controllable.
Model identity_model(Index dim) {
  NetworkConfig c;
  c.input_dim = dim;
  c.backbone_hidden = {};
  c.feature_dim = dim;
  c.ich_dim = dim;
  c.cluster_count = dim;
  c.seed = 1;
  Model m = Model::init(c);
  auto set = [](LinearLayer& layer, const Matrix& w) {
    layer.weight.mutable_value() = w;
    layer.bias.mutable_value().setZero();
  };
  Matrix id = Matrix::Identity(dim, dim);
  set(m.backbone[0], id);
  set(m.ich0, id);
  set(m.ich1, id);
  set(m.cch0, id);
  set(m.cch1, id);
  return m;
}

// Row of logits that softmaxes to the given probabilities, shifted positive
// so every relu on the way is a pass-through.
Eigen::RowVectorXd prob_logits(std::initializer_list<double> probs) {
  Eigen::RowVectorXd row(static_cast<Index>(probs.size()));
  Index j = 0;
  for (double p : probs) row(j++) = std::log(p) + 10.0;
  return row;
}

ConfidencePrediction make_cp(std::initializer_list<double> conf,
                             std::initializer_list<int> pred) {
  ConfidencePrediction cp;
  cp.confidence.resize(static_cast<Index>(conf.size()));
  Index i = 0;
  for (double c : conf) cp.confidence(i++) = c;
  cp.predicted.assign(pred);
  return cp;
}

}  // namespace

TEST_CASE("confidence is the winning assignment probability") {
  Model m = identity_model(3);
  Matrix x(2, 3);
  x.row(0) = prob_logits({0.7, 0.2, 0.1});
  x.row(1) = prob_logits({0.1, 0.1, 0.8});
  ConfidencePrediction cp = predict_confidence(m, x);
  CHECK(cp.predicted[0] == 0);
  CHECK(cp.predicted[1] == 2);
  CHECK(std::abs(cp.confidence(0) - 0.7) <= 1e-9);
  CHECK(std::abs(cp.confidence(1) - 0.8) <= 1e-9);

  Model m2 = identity_model(2);
  Matrix tie(1, 2);
  tie << 4.0, 4.0;  // exact tie breaks toward the lower index
  ConfidencePrediction tcp = predict_confidence(m2, tie);
  CHECK(tcp.predicted[0] == 0);
  CHECK(tcp.confidence(0) == 0.5);

  Matrix odds(1, 2);
  odds << 10.0, 10.0 + std::log(9.0);
  ConfidencePrediction ocp = predict_confidence(m2, odds);
  CHECK(ocp.predicted[0] == 1);
  CHECK(std::abs(ocp.confidence(0) - 0.9) <= 1e-9);
}

TEST_CASE("selection admits each cluster's most confident instances") {
  PseudoLabelStore store;
  store.gamma = 0.5;  // quota = max(1, floor(0.5 * 4 / 2)) = 1
  ConfidencePrediction cp =
      make_cp({0.99, 0.80, 0.95, 0.40}, {0, 0, 1, 1});
  std::vector<std::int64_t> ids{0, 1, 2, 3};
  auto admitted = select_pseudo_labels(cp, ids, 2, store);
  std::sort(admitted.begin(), admitted.end());
  CHECK(admitted == std::vector<std::int64_t>{0, 2});
  REQUIRE(store.entries.size() == 2);
  CHECK(store.entries.at(0).label == 0);
  CHECK(store.entries.at(0).confidence == 0.99);
  CHECK(store.entries.at(2).label == 1);
  CHECK(store.entries.at(2).confidence == 0.95);
}

TEST_CASE("selection quota, ties, empty clusters, and overwrites") {
  PseudoLabelStore store;
  store.gamma = 1.0;  // quota 2 with N=4, M=2: everything admitted
  ConfidencePrediction cp = make_cp({0.9, 0.1, 0.8, 0.2}, {0, 0, 1, 1});
  auto all = select_pseudo_labels(cp, {1, 2, 3, 4}, 2, store);
  CHECK(all.size() == 4);

  // A cluster nobody predicts admits nobody; ties at the threshold all pass.
  PseudoLabelStore tied;
  tied.gamma = 0.5;  // quota = max(1, floor(0.5 * 3 / 2)) = 1
  tied.entries[5] = {7, 0.123};  // gets overwritten below
  ConfidencePrediction tcp = make_cp({0.9, 0.9, 0.5}, {0, 0, 0});
  auto adm = select_pseudo_labels(tcp, {5, 6, 7}, 2, tied);
  std::sort(adm.begin(), adm.end());
  CHECK(adm == std::vector<std::int64_t>{5, 6});
  CHECK(tied.entries.at(5).label == 0);
  CHECK(tied.entries.at(5).confidence == 0.9);
  CHECK(tied.entries.count(7) == 0);

  CHECK_THROWS_AS(select_pseudo_labels(tcp, {5, 6, 7}, 1, tied),
                  ContractError);
  CHECK_THROWS_AS(select_pseudo_labels(tcp, {5, 6}, 2, tied), ContractError);
}

TEST_CASE("selection matches the brute-force oracle") {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    auto n = static_cast<Index>(2 + rng.below(63));
    auto m = static_cast<Index>(2 + rng.below(7));
    ConfidencePrediction cp;
    cp.confidence.resize(n);
    cp.predicted.resize(static_cast<std::size_t>(n));
    std::vector<std::int64_t> ids;
    for (Index i = 0; i < n; ++i) {
      cp.confidence(i) = rng.uniform01();
      cp.predicted[static_cast<std::size_t>(i)] =
          static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
      ids.push_back(3 * i + 1);
    }
    PseudoLabelStore store;
    store.gamma = 0.1 + 0.9 * rng.uniform01();
    auto admitted = select_pseudo_labels(cp, ids, m, store);
    std::sort(admitted.begin(), admitted.end());
    auto want =
        oracles::select_oracle(cp.confidence, cp.predicted, ids, m, store.gamma);
    CHECK(admitted == want);

    // Per-cluster sanity: at least the quota (when available), never more
    // than the cluster's predictions, and the store holds what was admitted.
    auto quota = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(
               store.gamma * static_cast<double>(n) / static_cast<double>(m))));
    for (Index k = 0; k < m; ++k) {
      std::size_t members = 0, taken = 0;
      for (Index i = 0; i < n; ++i) {
        if (cp.predicted[static_cast<std::size_t>(i)] != static_cast<int>(k))
          continue;
        ++members;
        if (store.entries.count(ids[static_cast<std::size_t>(i)])) ++taken;
      }
      CHECK(taken >= std::min(quota, members));
      CHECK(taken <= members);
    }
    CHECK(store.entries.size() == admitted.size());
  }
}

TEST_CASE("weed-out drops below alpha and refreshes what it keeps") {
  PseudoLabelStore store;
  store.alpha = 0.99;
  store.entries[1] = {0, 0.999};
  store.entries[2] = {1, 0.999};
  store.entries[3] = {0, 0.991};
  ConfidencePrediction cp = make_cp({0.95, 0.995, 0.99}, {0, 1, 0});
  auto dropped = weed_out(cp, {1, 2, 3}, store);
  CHECK(dropped == std::vector<std::int64_t>{1});
  CHECK(store.entries.count(1) == 0);
  CHECK(store.entries.at(2).confidence == 0.995);  // refreshed
  CHECK(store.entries.at(2).label == 1);
  CHECK(store.entries.at(3).confidence == 0.99);  // exactly alpha survives

  // Ids outside the batch stay untouched; unknown batch ids are ignored.
  store.entries[9] = {1, 0.5};
  ConfidencePrediction low = make_cp({0.1}, {0});
  CHECK(weed_out(low, {42}, store).empty());
  CHECK(store.entries.at(9).confidence == 0.5);
}

TEST_CASE("scl loss closed forms") {
  // Everyone shares one label: every denominator is empty, loss is zero.
  Matrix z(4, 2);
  z << 1, 0, 1, 0, 0, 1, 0, 1;
  std::vector<std::optional<int>> same{0, 0};
  CHECK(scl_loss(Tensor::constant(z), same, 0.5).value()(0, 0) == 0.0);

  // Two orthogonal instances with different labels, views identical:
  // every row gives -1/tau + ln 2.
  std::vector<std::optional<int>> two{0, 1};
  double v = scl_loss(Tensor::constant(z), two, 0.5).value()(0, 0);
  CHECK(v == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-9));
  CHECK(v == doctest::Approx(-1.30685).epsilon(1e-4));
}

TEST_CASE("scl loss matches the enumeration oracle") {
  Rng rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    auto n = static_cast<Index>(1 + rng.below(6));
    Matrix z(2 * n, 3);
    fill_uniform(z, rng, -1.0, 1.0);
    z.array() += 1.5;
    std::vector<std::optional<int>> pseudo;
    for (Index i = 0; i < n; ++i) {
      if (rng.uniform01() < 0.4)
        pseudo.emplace_back(std::nullopt);
      else
        pseudo.emplace_back(static_cast<int>(rng.below(3)));
    }
    double got = scl_loss(Tensor::constant(z), pseudo, 0.5).value()(0, 0);
    double want = oracles::scl_loss_oracle(z, pseudo, 0.5);
    CHECK(std::abs(got - want) <= 1e-9);
  }
}

TEST_CASE("scl with all-distinct labels is bounded by the instance loss") {
  Rng rng(27);
  Matrix z(8, 3);
  fill_uniform(z, rng, 0.2, 1.2);
  std::vector<std::optional<int>> pseudo{0, 1, 2, 3};
  double scl = scl_loss(Tensor::constant(z), pseudo, 0.5).value()(0, 0);
  double inst = instance_loss(Tensor::constant(z), 0.5).value()(0, 0);
  CHECK(scl <= inst + 1e-12);

  CHECK_THROWS_AS(scl_loss(Tensor::constant(z), {0, 1, 2}, 0.5),
                  ContractError);
  CHECK_THROWS_AS(scl_loss(Tensor::constant(Matrix::Ones(3, 2)), {0, 1}, 0.5),
                  ContractError);
}

TEST_CASE("scl gradient matches finite differences") {
  Rng rng(37);
  Matrix init(6, 3);
  fill_uniform(init, rng, 0.3, 1.3);
  Tensor z = Tensor::parameter(init);
  std::vector<std::optional<int>> pseudo{0, 0, 1};
  double err = oracles::fd_max_rel_error(
      [&] { return scl_loss(z, pseudo, 0.5); }, {z});
  CHECK(err <= 1e-4);
}

TEST_CASE("sl loss on a balanced two-instance batch") {
  Model m = identity_model(2);
  Matrix x(2, 2);
  x.row(0) = prob_logits({0.9, 0.1});
  x.row(1) = prob_logits({0.1, 0.9});
  std::vector<std::optional<int>> pseudo{0, 1};
  SlLossResult r = sl_loss(m, x, pseudo);
  CHECK(r.labeled == 2);
  CHECK(std::abs(r.loss.value()(0, 0) + std::log(0.9)) <= 1e-9);
  CHECK(r.loss.value()(0, 0) == doctest::Approx(0.10536).epsilon(1e-4));
}

TEST_CASE("sl loss edge cases") {
  Model m = identity_model(2);
  Matrix sure(1, 2);
  sure << 40.0, 10.0;  // prob of cluster 0 is 1 up to 1e-13
  SlLossResult r = sl_loss(m, sure, {0});
  CHECK(r.loss.value()(0, 0) <= 1e-9);
  CHECK(r.loss.value()(0, 0) >= 0.0);

  SlLossResult none = sl_loss(m, sure, {std::nullopt});
  CHECK(none.labeled == 0);
  CHECK(none.loss.value()(0, 0) == 0.0);
  CHECK(!none.loss.requires_grad());

  CHECK_THROWS_AS(sl_loss(m, sure, {2}), ContractError);   // label >= M
  CHECK_THROWS_AS(sl_loss(m, sure, {0, 1}), ContractError);  // count mismatch
}

TEST_CASE("sl loss matches the weighted cross-entropy oracle") {
  Rng rng(47);
  Model m = identity_model(4);
  for (int rep = 0; rep < 50; ++rep) {
    auto n = static_cast<Index>(1 + rng.below(6));
    Matrix x(n, 4);
    fill_uniform(x, rng, 0.1, 2.0);
    std::vector<std::optional<int>> pseudo;
    for (Index i = 0; i < n; ++i) {
      if (rng.uniform01() < 0.3)
        pseudo.emplace_back(std::nullopt);
      else
        pseudo.emplace_back(static_cast<int>(rng.below(4)));
    }
    Matrix probs(n, 4);
    for (Index i = 0; i < n; ++i)
      probs.row(i) = eval_cluster_row(m, x.row(i)).probs;
    SlLossResult r = sl_loss(m, x, pseudo);
    double want = oracles::sl_loss_oracle(probs, pseudo);
    CHECK(std::abs(r.loss.value()(0, 0) - want) <= 1e-9);
  }
}

TEST_CASE("sl gradient matches finite differences through the network") {
  NetworkConfig c;
  c.input_dim = 3;
  c.backbone_hidden = {4};
  c.feature_dim = 3;
  c.ich_dim = 2;
  c.cluster_count = 2;
  c.seed = 5;
  Model m = Model::init(c);
  Rng rng(57);
  Matrix x(3, 3);
  fill_uniform(x, rng, -1.0, 1.0);
  std::vector<std::optional<int>> pseudo{0, std::nullopt, 1};
  double err = oracles::fd_max_rel_error(
      [&] { return sl_loss(m, x, pseudo).loss; }, m.parameters());
  CHECK(err <= 1e-4);
}

TEST_CASE("boost loss is the plain sum of its parts") {
  Tensor a = Tensor::constant(Matrix::Constant(1, 1, -1.3));
  Tensor b = Tensor::constant(Matrix::Constant(1, 1, 0.4));
  CHECK(boost_loss(a, b).value()(0, 0) == doctest::Approx(-0.9).epsilon(1e-12));

  Rng rng(67);
  Matrix z(4, 3);
  fill_uniform(z, rng, 0.2, 1.2);
  Model m = identity_model(3);
  Matrix x(2, 3);
  fill_uniform(x, rng, 0.1, 2.0);
  std::vector<std::optional<int>> pseudo{0, 1};
  Tensor scl = scl_loss(Tensor::constant(z), pseudo, 0.5);
  SlLossResult sl = sl_loss(m, x, pseudo);
  double total = boost_loss(scl, sl.loss).value()(0, 0);
  CHECK(std::abs(total - (scl.value()(0, 0) + sl.loss.value()(0, 0))) <=
        1e-12);
}

TEST_CASE("pseudo-label store validation") {
  PseudoLabelStore store;
  store.gamma = 0.0;
  CHECK_THROWS_AS(store.validate(), ConfigError);
  store.gamma = 1.5;
  CHECK_THROWS_AS(store.validate(), ConfigError);
  store.gamma = 0.5;
  store.alpha = 0.0;
  CHECK_THROWS_AS(store.validate(), ConfigError);
  store.alpha = 1.01;
  CHECK_THROWS_AS(store.validate(), ConfigError);
  store.alpha = 0.99;
  store.validate();

  store.entries[4] = {-1, 0.5};
  CHECK_THROWS_AS(store.validate(), DataError);
  store.entries[4] = {0, 1.5};
  CHECK_THROWS_AS(store.validate(), DataError);
  store.entries[4] = {0, 0.5};
  store.validate();
  CHECK(store.label_of(4) == std::optional<int>(0));
  CHECK(store.label_of(5) == std::nullopt);
}
