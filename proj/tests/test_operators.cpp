#include "doctest.h"
#include "gradcheck.hpp"

#include "hgnn/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace hgnn;
using hgnn::testing::max_gradient_error;
using hgnn::testing::probe;
using hgnn::testing::random_matrix;

namespace {

constexpr double kExact = 1e-12;

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

/// Parameters with 1x1 weights set by hand and zero biases.
OperatorParams scalar_params(OperatorKind kind, std::vector<double> weights, int K = 0) {
  std::mt19937_64 rng(0);
  auto p = OperatorParams::init(kind, 1, 1, K, Aggregation::add, rng);
  if (kind == OperatorKind::sage) {
    p.weights[0] = Tensor(col({weights[0], weights[1]}), true);
  } else {
    for (std::size_t k = 0; k < p.weights.size(); ++k) p.weights[k] = Tensor(Matrix::Constant(1, 1, weights[k]), true);
  }
  for (auto& b : p.biases) b = Tensor(Matrix::Zero(1, b.cols()), true);
  return p;
}

GraphBatch edges(int n, std::vector<int> src, std::vector<int> dst, std::vector<double> w) {
  GraphBatch g;
  g.num_nodes = n;
  g.num_graphs = 1;
  g.node_graph.assign(static_cast<std::size_t>(n), 0);
  g.source = std::move(src);
  g.target = std::move(dst);
  g.weight = std::move(w);
  return g;
}

/// Dense adjacency written independently of build_adjacency: row = target.
Matrix dense_adjacency(const GraphBatch& g) {
  Matrix a = Matrix::Zero(g.num_nodes, g.num_nodes);
  for (std::size_t e = 0; e < g.source.size(); ++e) a(g.target[e], g.source[e]) += g.weight[e];
  return a;
}

Matrix dense_scaled_laplacian(const GraphBatch& g) {
  const Matrix a = dense_adjacency(g);
  const Matrix s = 0.5 * (a + a.transpose());
  const Index n = s.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double di = s.row(i).sum();
    if (di > 0) l(i, i) = 1.0;
    for (Index j = 0; j < n; ++j) {
      const double dj = s.row(j).sum();
      if (di > 0 && dj > 0) l(i, j) -= s(i, j) / std::sqrt(di * dj);
    }
  }
  return l - Matrix::Identity(n, n);
}

OperatorParams random_params(OperatorKind kind, int in, int out, int K, Aggregation aggr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = OperatorParams::init(kind, in, out, K, aggr, rng);
  for (auto& b : p.biases) b.mutable_value() = random_matrix(1, b.cols(), rng, -0.5, 0.5);
  return p;
}

std::vector<double> random_weights(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(std::max(0, n - 1)));
  for (auto& x : w) x = u(rng);
  return w;
}

}  // namespace

TEST_SUITE("operators") {

TEST_CASE("adjacency places each weight at target row and source column") {
  const Matrix a = build_adjacency(GraphBatch::chain(3, {0.2, 0.0}), false);
  Matrix expected = Matrix::Zero(3, 3);
  expected(1, 0) = 0.2;
  CHECK(max_abs_diff(a, expected) == 0.0);
  CHECK(build_adjacency(GraphBatch::chain(1, {}), true)(0, 0) == 1.0);
  CHECK(build_adjacency(GraphBatch::chain(1, {}), false)(0, 0) == 0.0);
}

TEST_CASE("graph contract violations") {
  CHECK_THROWS_AS(build_adjacency(GraphBatch::chain(2, {-0.1}), false), ContractError);
  CHECK_THROWS_AS(build_adjacency(edges(2, {0}, {2}, {1.0}), false), ContractError);
  auto p = scalar_params(OperatorKind::gcn, {1});
  CHECK_THROWS_AS(forward_operator(p, Tensor(col({1, 0})), GraphBatch::chain(2, {-1.0})), ContractError);
}

TEST_CASE("gcn examples") {
  auto p = scalar_params(OperatorKind::gcn, {1});
  SUBCASE("single node is the identity") {
    CHECK(max_abs_diff(forward_operator(p, Tensor(col({3.5})), GraphBatch::chain(1, {})).value(), col({3.5})) <
          kExact);
  }
  SUBCASE("two-node chain with unit weight") {
    // A_hat = [[1,0],[1,1]], row sums (1,2): node 0 keeps 1, node 1 gets 1/sqrt(2 * 1).
    const Matrix y = forward_operator(p, Tensor(col({1, 0})), GraphBatch::chain(2, {1.0})).value();
    CHECK(max_abs_diff(y, col({1.0, 1.0 / std::sqrt(2.0)})) < kExact);
  }
  SUBCASE("zero weights reduce to the dense transform") {
    const Matrix y = forward_operator(p, Tensor(col({2, -1, 4})), GraphBatch::chain(3, {0, 0})).value();
    CHECK(max_abs_diff(y, col({2, -1, 4})) < kExact);
  }
}

TEST_CASE("graph conv examples") {
  const auto g = GraphBatch::chain(2, {0.5});
  const Tensor v(col({2, 4}));
  auto p = scalar_params(OperatorKind::graph, {1});
  p.aggregation = Aggregation::add;
  CHECK(max_abs_diff(forward_operator(p, v, g).value(), col({0, 1})) < kExact);
  p.aggregation = Aggregation::mean;
  CHECK(max_abs_diff(forward_operator(p, v, g).value(), col({0, 2})) < kExact);
  p.aggregation = Aggregation::max;
  CHECK(max_abs_diff(forward_operator(p, v, g).value(), col({0, 2})) < kExact);
  for (auto a : {Aggregation::add, Aggregation::mean, Aggregation::max}) {
    p.aggregation = a;
    CHECK(max_abs_diff(forward_operator(p, Tensor(col({5})), GraphBatch::chain(1, {})).value(), col({0})) == 0.0);
  }
}

TEST_CASE("sage examples") {
  auto p = scalar_params(OperatorKind::sage, {1, 1});
  CHECK(max_abs_diff(forward_operator(p, Tensor(col({2, 4})), GraphBatch::chain(2, {1.0})).value(), col({2, 6})) <
        kExact);

  std::mt19937_64 rng(0);
  auto q = OperatorParams::init(OperatorKind::sage, 2, 4, 0, Aggregation::add, rng);
  q.weights[0] = Tensor(Matrix::Identity(4, 4));
  q.biases[0] = Tensor(Matrix::Zero(1, 4));
  Matrix h(1, 2);
  h << 1, 2;
  Matrix expected(1, 4);
  expected << 1, 2, 0, 0;
  CHECK(max_abs_diff(forward_operator(q, Tensor(h), GraphBatch::chain(1, {})).value(), expected) < kExact);

  Matrix three(3, 2);
  three << 1, 1, 3, 3, 0, 0;
  const Matrix y = forward_operator(q, Tensor(three), edges(3, {0, 1}, {2, 2}, {1, 1})).value();
  CHECK(y(2, 2) == doctest::Approx(2.0).epsilon(kExact));
  CHECK(y(2, 3) == doctest::Approx(2.0).epsilon(kExact));
}

TEST_CASE("tag examples") {
  const Tensor v(col({1, 0}));
  auto p0 = scalar_params(OperatorKind::tag, {1}, 0);
  CHECK(max_abs_diff(forward_operator(p0, v, GraphBatch::chain(2, {1.0})).value(), col({1, 0})) < kExact);
  // Node 1 receives node 0's feature along the edge 0 -> 1.
  auto p1 = scalar_params(OperatorKind::tag, {1, 1}, 1);
  CHECK(max_abs_diff(forward_operator(p1, v, GraphBatch::chain(2, {1.0})).value(), col({1, 1})) < kExact);
  auto p3 = scalar_params(OperatorKind::tag, {0.7, 1.3, -2, 5}, 3);
  CHECK(max_abs_diff(forward_operator(p3, Tensor(col({1, -2, 3})), GraphBatch::chain(3, {0, 0})).value(),
                     col({0.7, -1.4, 2.1})) < kExact);
}

TEST_CASE("cheb examples") {
  auto p0 = scalar_params(OperatorKind::cheb, {1.5}, 0);
  CHECK(max_abs_diff(forward_operator(p0, Tensor(col({2, 3})), GraphBatch::chain(2, {0.4})).value(), col({3, 4.5})) <
        kExact);
  auto p1 = scalar_params(OperatorKind::cheb, {2, 0.5}, 1);
  const Matrix v = col({1, -3, 2});
  const Matrix y = forward_operator(p1, Tensor(v), edges(3, {}, {}, {})).value();
  CHECK(max_abs_diff(y, v * 2.0 - v * 0.5) < kExact);
}

TEST_CASE("cheb second order matches dense polynomial evaluation") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = GraphBatch::chain(3, random_weights(3, rng));
    const Matrix lt = dense_scaled_laplacian(g);
    const Matrix v = random_matrix(3, 2, rng);
    std::mt19937_64 init(1);
    auto p = OperatorParams::init(OperatorKind::cheb, 2, 2, 2, Aggregation::add, init);
    p.weights[0] = Tensor(Matrix::Zero(2, 2));
    p.weights[1] = Tensor(Matrix::Zero(2, 2));
    p.weights[2] = Tensor(Matrix::Identity(2, 2));
    p.biases[0] = Tensor(Matrix::Zero(1, 2));
    const Matrix t2 = 2.0 * lt * lt - Matrix::Identity(3, 3);
    CHECK(max_abs_diff(forward_operator(p, Tensor(v), g).value(), t2 * v) < kExact);
  }
}

TEST_CASE("cheb K=0, tag K=0 and the dense transform agree exactly") {
  std::mt19937_64 rng(8);
  const Matrix theta = random_matrix(3, 4, rng);
  const Matrix v = random_matrix(5, 3, rng);
  const auto g = GraphBatch::chain(5, random_weights(5, rng));
  auto make = [&](OperatorKind kind) {
    std::mt19937_64 r(0);
    auto p = OperatorParams::init(kind, 3, 4, 0, Aggregation::add, r);
    p.weights[0] = Tensor(theta);
    p.biases[0] = Tensor(Matrix::Zero(1, 4));
    return p;
  };
  const Matrix cheb = forward_operator(make(OperatorKind::cheb), Tensor(v), g).value();
  const Matrix tag = forward_operator(make(OperatorKind::tag), Tensor(v), g).value();
  const Matrix dense = v * theta;
  CHECK(cheb == tag);
  CHECK(cheb == dense);
}

TEST_CASE("gin examples") {
  auto p = scalar_params(OperatorKind::gin, {1, 1});
  p.gin_hidden_activation = ActivationKind::identity;
  CHECK(max_abs_diff(forward_operator(p, Tensor(col({7})), GraphBatch::chain(1, {})).value(), col({7})) < kExact);
  p.epsilon = 0.5;
  CHECK(max_abs_diff(forward_operator(p, Tensor(col({1, 2})), GraphBatch::chain(2, {1.0})).value(),
                     col({1.5, 4.0})) < kExact);
}

TEST_CASE("gin aggregation matches a loop over the edge list") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = GraphBatch::chain(5, random_weights(5, rng));
    const Matrix v = random_matrix(5, 3, rng);
    std::mt19937_64 init(0);
    auto p = OperatorParams::init(OperatorKind::gin, 3, 3, 0, Aggregation::add, init);
    p.epsilon = 0.25;
    p.gin_hidden_activation = ActivationKind::identity;
    p.weights[0] = Tensor(Matrix::Identity(3, 3));
    p.weights[1] = Tensor(Matrix::Identity(3, 3));
    for (auto& b : p.biases) b = Tensor(Matrix::Zero(1, 3));
    Matrix expected = 1.25 * v;
    for (std::size_t e = 0; e < g.source.size(); ++e) {
      expected.row(g.target[e]) += g.weight[e] * v.row(g.source[e]);
    }
    CHECK(max_abs_diff(forward_operator(p, Tensor(v), g).value(), expected) < kExact);
  }
}

TEST_CASE("propagation matrices match dense constructions") {
  std::mt19937_64 rng(5);
  const auto g = GraphBatch::chain(6, random_weights(6, rng));
  const Matrix a = dense_adjacency(g);
  const Matrix ahat = a + Matrix::Identity(6, 6);
  Matrix gcn(6, 6), mean_(6, 6);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      gcn(i, j) = ahat(i, j) / std::sqrt(ahat.row(i).sum() * ahat.row(j).sum());
      const double d = a.row(i).sum();
      mean_(i, j) = d > 0 ? a(i, j) / d : 0.0;
    }
  }
  CHECK(max_abs_diff(gcn_operator(g).dense(), gcn) < kExact);
  CHECK(max_abs_diff(mean_operator(g).dense(), mean_) < kExact);
  CHECK(max_abs_diff(adjacency_operator(g).dense(), a) == 0.0);
  CHECK(max_abs_diff(cheb_operator(g).dense(), dense_scaled_laplacian(g)) < kExact);
}

TEST_CASE("zero edge weights silence every neighbour term") {
  std::mt19937_64 rng(6);
  const Matrix v = random_matrix(4, 3, rng);
  const auto zero = GraphBatch::chain(4, {0, 0, 0});
  const auto none = edges(4, {}, {}, {});
  for (auto kind : {OperatorKind::graph, OperatorKind::sage, OperatorKind::tag, OperatorKind::gin}) {
    CAPTURE(to_string(kind));
    const auto p = random_params(kind, 3, 2, 2, Aggregation::add, 3);
    CHECK(max_abs_diff(forward_operator(p, Tensor(v), zero).value(), forward_operator(p, Tensor(v), none).value()) ==
          0.0);
  }
}

TEST_CASE("relabelling nodes permutes the output rows") {
  std::mt19937_64 rng(7);
  const int n = 6;
  const auto g = GraphBatch::chain(n, random_weights(n, rng));
  const Matrix v = random_matrix(n, 3, rng);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  GraphBatch h = edges(n, {}, {}, {});
  for (std::size_t e = 0; e < g.source.size(); ++e) {
    h.source.push_back(perm[static_cast<std::size_t>(g.source[e])]);
    h.target.push_back(perm[static_cast<std::size_t>(g.target[e])]);
    h.weight.push_back(g.weight[e]);
  }
  Matrix pv(n, 3);
  for (int i = 0; i < n; ++i) pv.row(perm[static_cast<std::size_t>(i)]) = v.row(i);
  for (auto kind : kAllOperators) {
    for (auto aggr : {Aggregation::add, Aggregation::mean, Aggregation::max}) {
      if (kind != OperatorKind::graph && aggr != Aggregation::add) continue;
      CAPTURE(to_string(kind));
      const auto p = random_params(kind, 3, 4, 2, aggr, 9);
      const Matrix y = forward_operator(p, Tensor(v), g).value();
      const Matrix py = forward_operator(p, Tensor(pv), h).value();
      double worst = 0;
      for (int i = 0; i < n; ++i) {
        worst = std::max(worst, (py.row(perm[static_cast<std::size_t>(i)]) - y.row(i)).cwiseAbs().maxCoeff());
      }
      CHECK(worst < kExact);
    }
  }
}

TEST_CASE("every operator accepts a single node and stays finite") {
  for (auto kind : kAllOperators) {
    const auto p = random_params(kind, 3, 2, 3, Aggregation::mean, 2);
    std::mt19937_64 rng(1);
    const Matrix y = forward_operator(p, Tensor(random_matrix(1, 3, rng)), GraphBatch::chain(1, {})).value();
    CHECK(y.allFinite());
  }
}

TEST_CASE("operator gradients match finite differences") {
  std::mt19937_64 rng(31);
  for (auto kind : kAllOperators) {
    for (auto aggr : {Aggregation::add, Aggregation::mean, Aggregation::max}) {
      if (kind != OperatorKind::graph && aggr != Aggregation::add) continue;
      for (int n : {1, 2, 5, 8}) {
        CAPTURE(to_string(kind));
        CAPTURE(to_string(aggr));
        CAPTURE(n);
        auto p = random_params(kind, 3, 2, 2, aggr, rng());
        const auto g = GraphBatch::chain(n, random_weights(n, rng));
        Tensor x(random_matrix(n, 3, rng), true);
        const Matrix coef = random_matrix(n, 2, rng);
        PropagationCache cache(g);
        auto leaves = p.parameters();
        leaves.push_back(x);
        auto f = [&] { return probe(forward_operator(p, x, cache), coef); };
        CHECK(max_gradient_error(f, leaves) < 1e-4);
      }
    }
  }
}

TEST_CASE("parameter shapes follow the operator kind") {
  std::mt19937_64 rng(0);
  CHECK(OperatorParams::init(OperatorKind::sage, 3, 5, 0, Aggregation::add, rng).weights[0].rows() == 6);
  CHECK(OperatorParams::init(OperatorKind::tag, 3, 5, 3, Aggregation::add, rng).weights.size() == 4);
  CHECK(OperatorParams::init(OperatorKind::cheb, 3, 5, 2, Aggregation::add, rng).weights.size() == 3);
  const auto gin = OperatorParams::init(OperatorKind::gin, 3, 5, 0, Aggregation::add, rng);
  CHECK(gin.weights.size() == 2);
  CHECK(gin.biases.size() == 2);
  auto bad = OperatorParams::init(OperatorKind::gcn, 3, 5, 0, Aggregation::add, rng);
  bad.weights[0] = Tensor(Matrix::Zero(2, 5));
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}

}  // TEST_SUITE
