#pragma once

// Tree-structured Parzen estimator and the median pruning rule.

#include "hgnn/search_space.hpp"

#include <random>
#include <utility>
#include <vector>

namespace hgnn {

struct TpeOptions {
  int n_startup = 10;
  double gamma = 0.25;
  int n_candidates = 24;
  double bandwidth_floor = 0.01;  // fraction of the (internal) range
  double prior_weight = 1.0;
  double categorical_smoothing = 1.0;
};

/// A finished trial as seen by the sampler; higher objective is better.
struct Observation {
  Assignment params;
  double objective = 0;
};

/// Uniform sampling for the first n_startup observations, then one density
/// ratio maximization per parameter over active parameters.
Assignment tpe_suggest(const SearchSpace& space, const std::vector<Observation>& history,
                       std::mt19937_64& rng, const TpeOptions& options = {});

/// Density of the fitted good/bad models for one numeric parameter, in the
/// parameter's internal coordinate (log for float_log). Exposed for tests.
struct ParzenEstimator {
  std::vector<double> centers;
  std::vector<double> sigmas;
  double low = 0;
  double high = 1;
  double prior_weight = 1.0;

  static ParzenEstimator fit(std::vector<double> points, double low, double high, const TpeOptions& options);
  double density(double x) const;
  double sample(std::mt19937_64& rng) const;
};

struct MedianPrunerOptions {
  int warmup_epochs = 5;
  int min_trials = 10;
};

using Intermediates = std::vector<std::pair<int, double>>;

/// Prunes when the warmup is over, at least min_trials peers reported a
/// value at `epoch`, and `metric` is strictly below their median.
bool median_should_prune(int epoch, double metric, const std::vector<const Intermediates*>& peers,
                         const MedianPrunerOptions& options = {});

double median(std::vector<double> values);

}  // namespace hgnn
