#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tcl/errors.hpp"
#include "tcl/losses.hpp"

using namespace tcl;

namespace {

Matrix softmax_fixture(Index n, Index m, Rng& rng) {
  Matrix logits(n, m);
  fill_uniform(logits, rng, -2.0, 2.0);
  Matrix y(n, m);
  for (Index i = 0; i < n; ++i) {
    double mx = logits.row(i).maxCoeff();
    Vector e = (logits.row(i).transpose().array() - mx).exp();
    y.row(i) = e.transpose() / e.sum();
  }
  return y;
}

// Rows with norms bounded away from zero, so cosine stays smooth for FD.
Matrix safe_rows(Index n, Index d, Rng& rng) {
  Matrix z(n, d);
  fill_uniform(z, rng, 0.3, 1.3);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j)
      if ((i + j) % 2 == 0) z(i, j) = -z(i, j);
  return z;
}

}  // namespace

TEST_CASE("pairwise cosine fixtures") {
  Matrix z(4, 2);
  z << 1, 0,  // orthogonal to row 1
      0, 2,   //
      3, 4,   // parallel to row 3
      6, 8;
  Matrix s = pairwise_cosine(Tensor::constant(z)).value();
  CHECK(std::abs(s(0, 1)) <= 1e-12);
  CHECK(s(2, 3) == doctest::Approx(1.0).epsilon(1e-12));
  for (Index i = 0; i < 4; ++i)
    CHECK(s(i, i) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s == s.transpose().eval());

  Matrix w(2, 2);
  w << 1, 1, 1, 0;
  double c = pairwise_cosine(Tensor::constant(w)).value()(0, 1);
  CHECK(c == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-5));
}

TEST_CASE("instance loss closed forms") {
  Rng rng(11);
  // Single instance: the lone negative is the positive, so the loss is 0.
  Matrix z2 = safe_rows(2, 3, rng);
  CHECK(instance_loss(Tensor::constant(z2), 0.5).value()(0, 0) == 0.0);

  // All views identical: every similarity is 1, loss = ln(2N - 1).
  Matrix z4(4, 3);
  for (Index i = 0; i < 4; ++i) z4.row(i) << 0.6, 0.0, 0.8;
  double v = instance_loss(Tensor::constant(z4), 0.5).value()(0, 0);
  CHECK(v == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("instance loss matches brute-force enumeration") {
  Rng rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    Index n = 1 + static_cast<Index>(rng.below(8));
    Matrix z(2 * n, 3);
    fill_uniform(z, rng, -1.0, 1.0);
    z.array() += 1.5;  // keep norms comfortably positive
    double got = instance_loss(Tensor::constant(z), 0.5).value()(0, 0);
    double want = oracles::instance_loss_oracle(z, 0.5);
    CHECK(std::abs(got - want) <= 1e-9);
  }
}

TEST_CASE("instance loss is invariant to per-row scaling") {
  Rng rng(31);
  Matrix z = safe_rows(6, 4, rng);
  double base = instance_loss(Tensor::constant(z), 0.5).value()(0, 0);
  Matrix scaled = z;
  scaled.row(0) *= 3.7;
  scaled.row(3) *= 0.01;
  double again = instance_loss(Tensor::constant(scaled), 0.5).value()(0, 0);
  CHECK(std::abs(base - again) <= 1e-9);
}

TEST_CASE("instance loss rejects odd or empty stacks") {
  Rng rng(41);
  CHECK_THROWS_AS(instance_loss(Tensor::constant(Matrix::Ones(3, 2)), 0.5),
                  ContractError);
  CHECK_THROWS_AS(instance_loss(Tensor::constant(Matrix(0, 2)), 0.5),
                  ContractError);
  CHECK_THROWS_AS(instance_loss(Tensor::constant(Matrix::Ones(4, 2)), 0.0),
                  ContractError);
}

TEST_CASE("raising the positive similarity lowers the nt-xent loss") {
  Matrix a = Matrix::Constant(4, 4, 0.2);
  a.diagonal().setConstant(1.0);
  Matrix b = a;
  b(0, 1) = b(1, 0) = 0.9;
  Vector w = Vector::Constant(4, 0.25);
  auto run = [&](const Matrix& s) {
    return detail::nt_xent(Tensor::constant(s), detail::interleaved_partner(4),
                           detail::all_but_self_mask(4), w)
        .value()(0, 0);
  };
  CHECK(run(b) < run(a));
}

TEST_CASE("cluster entropy closed forms") {
  Matrix uniform = Matrix::Constant(3, 2, 0.5);
  double h = cluster_entropy(Tensor::constant(uniform),
                             Tensor::constant(uniform))
                 .value()(0, 0);
  CHECK(h == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  Matrix onehot(3, 2);
  onehot << 1, 0, 1, 0, 1, 0;
  double h0 = cluster_entropy(Tensor::constant(onehot),
                              Tensor::constant(onehot))
                  .value()(0, 0);
  CHECK(h0 == doctest::Approx(0.0).epsilon(1e-12));

  Matrix mixed(2, 2);
  mixed << 1.0, 0.0, 0.5, 0.5;  // column means (0.75, 0.25) per view
  double hm = cluster_entropy(Tensor::constant(mixed),
                              Tensor::constant(mixed))
                  .value()(0, 0);
  double want = -2.0 * (0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  CHECK(hm == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cluster entropy range and maximizer") {
  Rng rng(51);
  for (int rep = 0; rep < 50; ++rep) {
    Index n = 2 + static_cast<Index>(rng.below(6));
    Index m = 2 + static_cast<Index>(rng.below(3));
    Matrix yw = softmax_fixture(n, m, rng);
    Matrix ys = softmax_fixture(n, m, rng);
    double h = cluster_entropy(Tensor::constant(yw), Tensor::constant(ys))
                   .value()(0, 0);
    CHECK(h >= -1e-12);
    CHECK(h <= 2.0 * std::log(static_cast<double>(m)) + 1e-12);
  }
  Matrix u = Matrix::Constant(4, 3, 1.0 / 3.0);
  double h = cluster_entropy(Tensor::constant(u), Tensor::constant(u))
                 .value()(0, 0);
  CHECK(std::abs(h - 2.0 * std::log(3.0)) <= 1e-9);
}

TEST_CASE("cluster loss closed forms") {
  // Uniform assignments: all 2M columns identical, entropy maximal.
  Matrix u = Matrix::Constant(3, 2, 0.5);
  double v =
      cluster_loss(Tensor::constant(u), Tensor::constant(u), 1.0).value()(0, 0);
  CHECK(v == doctest::Approx(std::log(3.0) - 2.0 * std::log(2.0))
                 .epsilon(1e-9));

  // Two orthogonal one-hot clusters, both views equal.
  Matrix eye = Matrix::Identity(2, 2);
  double w = cluster_loss(Tensor::constant(eye), Tensor::constant(eye), 1.0)
                 .value()(0, 0);
  double want = std::log(1.0 + 2.0 / std::exp(1.0)) - 2.0 * std::log(2.0);
  CHECK(w == doctest::Approx(want).epsilon(1e-9));
  CHECK(w == doctest::Approx(-0.83485).epsilon(1e-4));
}

TEST_CASE("cluster loss matches brute-force enumeration") {
  Rng rng(61);
  for (int rep = 0; rep < 100; ++rep) {
    Index n = 2 + static_cast<Index>(rng.below(7));
    Index m = 2 + static_cast<Index>(rng.below(3));
    Matrix yw = softmax_fixture(n, m, rng);
    Matrix ys = softmax_fixture(n, m, rng);
    double got = cluster_loss(Tensor::constant(yw), Tensor::constant(ys), 1.0)
                     .value()(0, 0);
    double want = oracles::cluster_loss_oracle(yw, ys, 1.0);
    CHECK(std::abs(got - want) <= 1e-9);
  }
}

TEST_CASE("cluster loss is invariant to a shared column permutation") {
  Rng rng(71);
  Matrix yw = softmax_fixture(5, 4, rng);
  Matrix ys = softmax_fixture(5, 4, rng);
  double base = cluster_loss(Tensor::constant(yw), Tensor::constant(ys), 1.0)
                    .value()(0, 0);
  std::vector<Index> perm{2, 0, 3, 1};
  Matrix pw(5, 4), ps(5, 4);
  for (Index j = 0; j < 4; ++j) {
    pw.col(j) = yw.col(perm[static_cast<std::size_t>(j)]);
    ps.col(j) = ys.col(perm[static_cast<std::size_t>(j)]);
  }
  double permuted =
      cluster_loss(Tensor::constant(pw), Tensor::constant(ps), 1.0)
          .value()(0, 0);
  CHECK(std::abs(base - permuted) <= 1e-9);
}

TEST_CASE("assignment validation rejects malformed rows") {
  Matrix bad_sum(2, 2);
  bad_sum << 0.6, 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(cluster_loss(Tensor::constant(bad_sum),
                               Tensor::constant(Matrix::Constant(2, 2, 0.5)),
                               1.0),
                  ContractError);
  Matrix negative(2, 2);
  negative << 1.2, -0.2, 0.5, 0.5;
  CHECK_THROWS_AS(cluster_loss(Tensor::constant(Matrix::Constant(2, 2, 0.5)),
                               Tensor::constant(negative), 1.0),
                  ContractError);
  CHECK_THROWS_AS(detail::validate_assignment(negative, "probe"),
                  ContractError);
}

TEST_CASE("twin loss decomposes exactly") {
  Rng rng(81);
  Matrix z = safe_rows(6, 4, rng);
  Matrix yw = softmax_fixture(3, 2, rng);
  Matrix ys = softmax_fixture(3, 2, rng);
  TwinLossBreakdown b = twin_loss(Tensor::constant(z), Tensor::constant(yw),
                                  Tensor::constant(ys), 0.5, 1.0);
  double inst = b.instance.value()(0, 0);
  double clus = b.cluster.value()(0, 0);
  CHECK(std::abs(b.total.value()(0, 0) - (inst + clus)) <= 1e-12);
  double h = cluster_entropy(Tensor::constant(yw), Tensor::constant(ys))
                 .value()(0, 0);
  CHECK(std::abs(b.entropy - h) <= 1e-12);
  CHECK_THROWS_AS(twin_loss(Tensor::constant(z), Tensor::constant(yw),
                            Tensor::constant(softmax_fixture(4, 2, rng)), 0.5,
                            1.0),
                  ContractError);
}

TEST_CASE("instance loss gradient matches finite differences") {
  Rng rng(91);
  for (int rep = 0; rep < 3; ++rep) {
    Tensor z = Tensor::parameter(safe_rows(6, 3, rng));
    double err = oracles::fd_max_rel_error(
        [&] { return instance_loss(z, 0.5); }, {z});
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("cluster loss gradient matches finite differences") {
  Rng rng(101);
  for (int rep = 0; rep < 3; ++rep) {
    Matrix lw(4, 3), ls(4, 3);
    fill_uniform(lw, rng, -1.0, 1.0);
    fill_uniform(ls, rng, -1.0, 1.0);
    Tensor tw = Tensor::parameter(lw);
    Tensor ts = Tensor::parameter(ls);
    double err = oracles::fd_max_rel_error(
        [&] {
          return cluster_loss(softmax_rows(tw), softmax_rows(ts), 1.0);
        },
        {tw, ts});
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("twin loss gradient matches finite differences") {
  Rng rng(111);
  Tensor z = Tensor::parameter(safe_rows(6, 3, rng));
  Matrix lw(3, 4), ls(3, 4);
  fill_uniform(lw, rng, -1.0, 1.0);
  fill_uniform(ls, rng, -1.0, 1.0);
  Tensor tw = Tensor::parameter(lw);
  Tensor ts = Tensor::parameter(ls);
  double err = oracles::fd_max_rel_error(
      [&] {
        return twin_loss(z, softmax_rows(tw), softmax_rows(ts), 0.5, 1.0)
            .total;
      },
      {z, tw, ts});
  CHECK(err <= 1e-4);
}
