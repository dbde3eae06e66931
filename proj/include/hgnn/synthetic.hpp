#pragma once

// Seeded generator for small event logs with a known labelling rule.

#include "hgnn/eventlog.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hgnn {

enum class LabelRule { activity_presence, duration_threshold, graph_attribute_threshold };

std::string to_string(LabelRule rule);
LabelRule label_rule_from_string(const std::string& name);

struct SyntheticSpec {
  int n_cases = 100;
  int n_activities = 8;
  int n_classes = 2;
  double imbalance_ratio = 1.0;  // majority share / minority share
  LabelRule rule = LabelRule::activity_presence;
  std::uint64_t seed = 0;
};

struct SyntheticLog {
  LogSchema schema;
  BinningPolicy binning;
  std::vector<Trace> traces;
};

/// Class priors falling from the majority (class 0) to the minority with
/// p_0 / p_{C-1} == ratio. Shares follow a quadratic ramp: sqrt(weight) is
/// linear in the class index.
std::vector<double> class_priors(int n_classes, double ratio);

/// Largest-remainder rounding of priors to case counts. Throws when a class
/// would receive no case.
std::vector<int> class_counts(int n_cases, const std::vector<double>& priors);

SyntheticLog generate_synthetic_log(const SyntheticSpec& spec);

}  // namespace hgnn
