#include "hgnn/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace hgnn {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double to_internal(const ParamSpec& p, double v) { return p.kind == ParamKind::float_log ? std::log(v) : v; }

double from_internal(const ParamSpec& p, double x) {
  switch (p.kind) {
    case ParamKind::float_log: return std::clamp(std::exp(x), p.low, p.high);
    case ParamKind::integer: return std::clamp(std::round(x), p.low, p.high);
    default: return std::clamp(x, p.low, p.high);
  }
}

std::pair<double, double> internal_range(const ParamSpec& p) {
  switch (p.kind) {
    case ParamKind::float_log: return {std::log(p.low), std::log(p.high)};
    case ParamKind::integer: return {p.low - 0.5, p.high + 0.5};
    default: return {p.low, p.high};
  }
}

}  // namespace

ParzenEstimator ParzenEstimator::fit(std::vector<double> points, double low, double high,
                                     const TpeOptions& options) {
  ParzenEstimator e;
  e.low = low;
  e.high = high;
  e.prior_weight = options.prior_weight;
  e.centers = std::move(points);
  const double range = high - low;
  // Scott's rule over the whole mixture, the uniform prior included, so a
  // tight cluster of good points still keeps some spread.
  double sigma = range;
  if (!e.centers.empty()) {
    const double n = static_cast<double>(e.centers.size());
    const double w = e.prior_weight;
    const double mid = 0.5 * (low + high);
    const double mean = (std::accumulate(e.centers.begin(), e.centers.end(), 0.0) + w * mid) / (n + w);
    double ss = w * (range * range / 12.0 + (mid - mean) * (mid - mean));
    for (double c : e.centers) ss += (c - mean) * (c - mean);
    sigma = 1.06 * std::sqrt(ss / (n + w)) * std::pow(n + w, -0.2);
  }
  sigma = std::clamp(sigma, options.bandwidth_floor * range, range);
  e.sigmas.assign(e.centers.size(), sigma);
  return e;
}

double ParzenEstimator::density(double x) const {
  const double uniform = (x >= low && x <= high) ? 1.0 / (high - low) : 0.0;
  double total = prior_weight * uniform;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double s = sigmas[i];
    const double z = (x - centers[i]) / s;
    const double mass = normal_cdf((high - centers[i]) / s) - normal_cdf((low - centers[i]) / s);
    if (mass <= 0) continue;
    total += std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi)) / mass;
  }
  return total / (static_cast<double>(centers.size()) + prior_weight);
}

double ParzenEstimator::sample(std::mt19937_64& rng) const {
  const double n = static_cast<double>(centers.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double pick = unit(rng) * (n + prior_weight);
  if (pick >= n) return std::uniform_real_distribution<double>(low, high)(rng);
  const auto i = std::min(centers.size() - 1, static_cast<std::size_t>(pick));
  std::normal_distribution<double> gauss(centers[i], sigmas[i]);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double x = gauss(rng);
    if (x >= low && x <= high) return x;
  }
  return std::clamp(centers[i], low, high);
}

Assignment tpe_suggest(const SearchSpace& space, const std::vector<Observation>& history, std::mt19937_64& rng,
                       const TpeOptions& options) {
  if (static_cast<int>(history.size()) < options.n_startup) return sample_uniform(space, rng);
  Assignment a;
  for (const auto& p : space) {
    if (!p.active(a)) continue;
    std::vector<std::pair<double, const ParamValue*>> seen;
    for (const auto& obs : history) {
      const auto it = obs.params.find(p.name);
      if (it != obs.params.end() && p.admits(it->second) && std::isfinite(obs.objective)) {
        seen.emplace_back(obs.objective, &it->second);
      }
    }
    if (seen.size() < 2) {
      a[p.name] = p.sample_uniform(rng);
      continue;
    }
    std::stable_sort(seen.begin(), seen.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    const auto n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(seen.size()))));

    if (p.kind == ParamKind::categorical) {
      const std::size_t k = p.choices.size();
      std::vector<double> good(k, options.categorical_smoothing), bad(k, options.categorical_smoothing);
      for (std::size_t i = 0; i < seen.size(); ++i) {
        const auto& v = std::get<std::string>(*seen[i].second);
        const auto idx = static_cast<std::size_t>(std::find(p.choices.begin(), p.choices.end(), v) - p.choices.begin());
        (i < n_good ? good : bad)[idx] += 1.0;
      }
      const double good_total = std::accumulate(good.begin(), good.end(), 0.0);
      const double bad_total = std::accumulate(bad.begin(), bad.end(), 0.0);
      std::discrete_distribution<std::size_t> draw(good.begin(), good.end());
      std::size_t best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < options.n_candidates; ++c) {
        const std::size_t idx = draw(rng);
        const double score = std::log(good[idx] / good_total) - std::log(bad[idx] / bad_total);
        if (score > best_score) {
          best_score = score;
          best = idx;
        }
      }
      a[p.name] = p.choices[best];
      continue;
    }

    const auto [lo, hi] = internal_range(p);
    std::vector<double> good_pts, bad_pts;
    for (std::size_t i = 0; i < seen.size(); ++i) {
      const double x = to_internal(p, std::get<double>(*seen[i].second));
      (i < n_good ? good_pts : bad_pts).push_back(x);
    }
    const auto l = ParzenEstimator::fit(std::move(good_pts), lo, hi, options);
    const auto g = ParzenEstimator::fit(std::move(bad_pts), lo, hi, options);
    double best_x = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < options.n_candidates; ++c) {
      double x = l.sample(rng);
      if (p.kind == ParamKind::integer) x = std::clamp(std::round(x), p.low, p.high);
      const double score = std::log(l.density(x)) - std::log(g.density(x));
      if (score > best_score) {
        best_score = score;
        best_x = x;
      }
    }
    a[p.name] = from_internal(p, best_x);
  }
  return a;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

bool median_should_prune(int epoch, double metric, const std::vector<const Intermediates*>& peers,
                         const MedianPrunerOptions& options) {
  if (epoch < options.warmup_epochs) return false;
  std::vector<double> values;
  for (const auto* peer : peers) {
    for (const auto& [e, v] : *peer) {
      if (e == epoch) {
        values.push_back(v);
        break;
      }
    }
  }
  if (static_cast<int>(values.size()) < options.min_trials || values.empty()) return false;
  return metric < median(std::move(values));
}

}  // namespace hgnn
