#pragma once

// Central finite-difference gradient checks shared by the unit tests and the
// acceptance binary.

#include "hgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace hgnn::testing {

inline constexpr double kFiniteDifferenceStep = 1e-4;
inline constexpr double kGradientTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-2). The floor keeps entries whose true
/// gradient is zero from turning rounding noise into a large relative error.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / scale;
}

/// Largest relative error between backprop and central differences of the
/// scalar `loss` over every entry of `leaves`.
inline double max_gradient_error(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                                 double step = kFiniteDifferenceStep) {
  for (auto& p : leaves) p.zero_grad();
  loss().backward();
  std::vector<Matrix> analytic;
  analytic.reserve(leaves.size());
  for (const auto& p : leaves) analytic.push_back(p.grad());

  double worst = 0;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Matrix& w = leaves[k].mutable_value();
    for (Index i = 0; i < w.size(); ++i) {
      double& x = w.data()[i];
      const double saved = x;
      x = saved + step;
      const double up = loss().item();
      x = saved - step;
      const double down = loss().item();
      x = saved;
      const double numeric = (up - down) / (2 * step);
      worst = std::max(worst, relative_error(analytic[k].data()[i], numeric));
    }
  }
  return worst;
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -2, double hi = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// A weighted sum of the entries so every output element has a distinct
/// nonzero upstream gradient.
inline Tensor probe(const Tensor& y, const Matrix& coefficients) {
  return sum(mul_constant(y, coefficients));
}

}  // namespace hgnn::testing
