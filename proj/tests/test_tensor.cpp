#include "doctest.h"
#include "gradcheck.hpp"

#include "hgnn/tensor.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace hgnn;
using hgnn::testing::max_gradient_error;
using hgnn::testing::probe;
using hgnn::testing::random_matrix;

namespace {

bool same(const Matrix& a, const Matrix& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; }

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("sum of a 2x2 leaf has a gradient of ones") {
  Tensor w(Matrix::Constant(2, 2, 3.0), true);
  sum(w).backward();
  CHECK(same(w.grad(), Matrix::Ones(2, 2)));
}

TEST_CASE("relu gradient is zero on negative entries") {
  auto w = Tensor::from_rows({{-1, 1}, {2, -3}}, true);
  sum(apply_activation(w, ActivationKind::relu)).backward();
  Matrix expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK(same(w.grad(), expected));
}

TEST_CASE("relu and leaky relu use the negative slope at zero") {
  CHECK(activation_derivative(ActivationKind::relu, 0.0) == 0.0);
  CHECK(activation_derivative(ActivationKind::leaky_relu, 0.0) == kLeakyReluSlope);
  CHECK(activation_derivative(ActivationKind::leaky_relu, 1.0) == 1.0);
}

TEST_CASE("gelu tanh form stays within 1e-3 of the erf form") {
  for (double x = -5; x <= 5; x += 0.01) {
    const double exact = 0.5 * x * (1 + std::erf(x / std::numbers::sqrt2));
    CHECK(std::abs(activation_value(ActivationKind::gelu, x) - exact) < 1e-3);
  }
}

TEST_CASE("activation values at reference points") {
  CHECK(activation_value(ActivationKind::elu, -1.0) == doctest::Approx(std::exp(-1.0) - 1).epsilon(1e-15));
  CHECK(activation_value(ActivationKind::softplus, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(activation_value(ActivationKind::leaky_relu, -2.0) == doctest::Approx(-0.02).epsilon(1e-15));
  CHECK(activation_value(ActivationKind::softplus, 800.0) == 800.0);
  CHECK(std::isfinite(activation_value(ActivationKind::softplus, -800.0)));
}

TEST_CASE("two backward passes accumulate exactly twice the gradient") {
  std::mt19937_64 rng(3);
  Tensor a(random_matrix(3, 4, rng), true);
  Tensor b(random_matrix(4, 2, rng), true);
  auto loss = [&] { return sum(apply_activation(matmul(a, b), ActivationKind::tanh)); };
  loss().backward();
  const Matrix once = a.grad();
  loss().backward();
  CHECK(same(a.grad(), 2.0 * once));
  a.zero_grad();
  CHECK(same(a.grad(), Matrix::Zero(3, 4)));
}

TEST_CASE("backward on a non-scalar is a contract error") {
  Tensor w(Matrix::Ones(2, 1), true);
  CHECK_THROWS_AS(w.backward(), ContractError);
}

TEST_CASE("shape mismatches raise dimension errors") {
  Tensor a(Matrix::Ones(2, 3)), b(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, Tensor(Matrix::Ones(3, 2))), DimensionError);
  CHECK_THROWS_AS(add_row(a, Tensor(Matrix::Ones(1, 2))), DimensionError);
}

TEST_CASE("rowwise reduce examples") {
  auto x = Tensor::from_rows({{1, 2}, {3, 4}});
  const std::vector<int> one{0, 0};
  CHECK(same(rowwise_reduce(x, ReduceMode::sum, one).value(), Tensor::from_rows({{4, 6}}).value()));
  CHECK(same(rowwise_reduce(x, ReduceMode::mean, one).value(), Tensor::from_rows({{2, 3}}).value()));
  auto y = Tensor::from_rows({{1}, {5}, {2}});
  const std::vector<int> two{0, 0, 1};
  CHECK(same(rowwise_reduce(y, ReduceMode::max, two).value(), Tensor::from_rows({{5}, {2}}).value()));
}

TEST_CASE("rowwise max routes the gradient to the first arg-max row") {
  auto x = Tensor::from_rows({{3}, {3}, {1}}, true);
  const std::vector<int> g{0, 0, 0};
  sum(rowwise_reduce(x, ReduceMode::max, g)).backward();
  CHECK(x.grad()(0, 0) == 1.0);
  CHECK(x.grad()(1, 0) == 0.0);
  CHECK(x.grad()(2, 0) == 0.0);
}

TEST_CASE("rowwise reduce rejects an empty group") {
  auto x = Tensor::from_rows({{1}, {2}});
  const std::vector<int> gap{0, 2};
  CHECK_THROWS_AS(rowwise_reduce(x, ReduceMode::sum, gap), ContractError);
}

TEST_CASE("gather rows yields zeros for negative indices") {
  auto table = Tensor::from_rows({{1, 2}, {3, 4}}, true);
  const std::vector<int> idx{1, -1, 1};
  auto g = gather_rows(table, idx);
  CHECK(g(0, 0) == 3);
  CHECK(g(1, 0) == 0);
  CHECK(g(1, 1) == 0);
  sum(g).backward();
  CHECK(table.grad()(1, 0) == 2.0);
  CHECK(table.grad()(0, 0) == 0.0);
}

TEST_CASE("every op matches finite differences") {
  std::mt19937_64 rng(11);
  Tensor a(random_matrix(4, 3, rng), true);
  Tensor b(random_matrix(3, 5, rng), true);
  Tensor c(random_matrix(4, 3, rng), true);
  Tensor bias(random_matrix(1, 3, rng), true);
  Tensor gamma(random_matrix(1, 3, rng, 0.5, 1.5), true);
  Tensor beta(random_matrix(1, 3, rng), true);
  const Matrix mask = random_matrix(4, 3, rng);
  const std::vector<int> groups{0, 0, 1, 1};
  const std::vector<int> src{0, 1, 2}, dst{1, 2, 3};

  SUBCASE("matmul, add, sub, hadamard, scale") {
    const Matrix coef = random_matrix(4, 5, rng);
    auto f = [&] {
      auto y = add(sub(hadamard(a, c), scale(c, 0.7)), a);
      return probe(matmul(y, b), coef);
    };
    CHECK(max_gradient_error(f, {a, b, c}) < 1e-4);
  }
  SUBCASE("broadcast bias, constant mask, concat, gather, mean") {
    const std::vector<int> idx{3, -1, 0, 0};
    auto f = [&] {
      auto y = concat_cols({add_row(a, bias), mul_constant(c, mask)});
      return mean(hadamard(gather_rows(y, idx), gather_rows(y, idx)));
    };
    CHECK(max_gradient_error(f, {a, c, bias}) < 1e-4);
  }
  SUBCASE("reductions") {
    for (auto mode : {ReduceMode::sum, ReduceMode::mean, ReduceMode::max}) {
      auto f = [&] { return probe(rowwise_reduce(a, mode, groups), Matrix::Constant(2, 3, 1.3)); };
      CHECK(max_gradient_error(f, {a}) < 1e-4);
    }
  }
  SUBCASE("edge max") {
    auto f = [&] { return probe(edge_max(a, src, dst, 4), mask); };
    CHECK(max_gradient_error(f, {a}) < 1e-4);
  }
  SUBCASE("batch norm") {
    auto f = [&] { return probe(batch_norm_train(a, gamma, beta, 1e-5), mask); };
    CHECK(max_gradient_error(f, {a, gamma, beta}) < 1e-4);
  }
  SUBCASE("sparse propagation") {
    SparseMatrix s(4, 4);
    s.insert(1, 0) = 0.3;
    s.insert(3, 2) = 1.7;
    s.insert(2, 2) = -0.4;
    const auto op = LinearOperator::from(s);
    auto f = [&] { return probe(propagate(op, a), mask); };
    CHECK(max_gradient_error(f, {a}) < 1e-4);
  }
}

TEST_CASE("all activations match finite differences") {
  std::mt19937_64 rng(21);
  for (auto kind : kSearchActivations) {
    CAPTURE(to_string(kind));
    Tensor x(random_matrix(5, 4, rng), true);
    const Matrix coef = random_matrix(5, 4, rng);
    auto f = [&] { return probe(apply_activation(x, kind), coef); };
    CHECK(max_gradient_error(f, {x}) < 1e-4);
  }
}

TEST_CASE("batch norm eval uses the frozen statistics") {
  auto x = Tensor::from_rows({{1, 2}, {3, 6}});
  Tensor gamma(Matrix::Ones(1, 2)), beta(Matrix::Zero(1, 2));
  Matrix mean_(1, 2), var(1, 2);
  mean_ << 1, 2;
  var << 4, 16;
  auto y = batch_norm_eval(x, gamma, beta, mean_, var, 0.0);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(y(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("identical inputs give bit-identical results") {
  std::mt19937_64 r1(9), r2(9);
  const Matrix m1 = random_matrix(6, 6, r1), m2 = random_matrix(6, 6, r2);
  auto run = [](const Matrix& m) {
    Tensor x(m, true);
    auto y = apply_activation(matmul(x, x), ActivationKind::gelu);
    sum(y).backward();
    return std::pair{y.value(), x.grad()};
  };
  const auto [y1, g1] = run(m1);
  const auto [y2, g2] = run(m2);
  CHECK(same(y1, y2));
  CHECK(same(g1, g2));
}

}  // TEST_SUITE
