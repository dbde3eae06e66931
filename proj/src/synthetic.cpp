#include "hgnn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace hgnn {

std::string to_string(LabelRule rule) {
  switch (rule) {
    case LabelRule::activity_presence: return "presence";
    case LabelRule::duration_threshold: return "duration";
    case LabelRule::graph_attribute_threshold: return "attribute";
  }
  return "?";
}

LabelRule label_rule_from_string(const std::string& name) {
  if (name == "presence") return LabelRule::activity_presence;
  if (name == "duration") return LabelRule::duration_threshold;
  if (name == "attribute") return LabelRule::graph_attribute_threshold;
  throw std::invalid_argument("unknown label rule '" + name + "'");
}

std::vector<double> class_priors(int n_classes, double ratio) {
  if (n_classes < 2) throw std::invalid_argument("class_priors: need at least 2 classes");
  if (!(ratio >= 1.0)) throw std::invalid_argument("class_priors: imbalance ratio must be >= 1");
  const double top = std::sqrt(ratio);
  std::vector<double> w(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    const double t = static_cast<double>(n_classes - 1 - c) / (n_classes - 1);
    const double root = 1.0 + (top - 1.0) * t;
    w[static_cast<std::size_t>(c)] = root * root;
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

std::vector<int> class_counts(int n_cases, const std::vector<double>& priors) {
  std::vector<int> counts(priors.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t c = 0; c < priors.size(); ++c) {
    const double exact = priors[c] * n_cases;
    counts[c] = static_cast<int>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - counts[c], c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n_cases; ++i, ++assigned) ++counts[remainders[i].second];
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("synthetic: imbalance ratio infeasible for " +
                                  std::to_string(n_cases) + " cases (class " + std::to_string(c) +
                                  " would be empty)");
    }
  }
  return counts;
}

namespace {

std::string numbered(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

}  // namespace

SyntheticLog generate_synthetic_log(const SyntheticSpec& spec) {
  if (spec.n_cases < 10) throw std::invalid_argument("synthetic: n_cases must be >= 10");
  if (spec.n_classes < 2) throw std::invalid_argument("synthetic: n_classes must be >= 2");
  const int n_markers = spec.rule == LabelRule::activity_presence ? spec.n_classes - 1 : 0;
  const int n_base = spec.n_activities - n_markers;
  if (n_base < 2) {
    throw std::invalid_argument("synthetic: need at least " + std::to_string(n_markers + 2) +
                                " activities for this rule");
  }

  SyntheticLog log;
  auto& schema = log.schema;
  schema.case_id_column = "case_id";
  schema.activity_column = "activity";
  schema.start_time_column = "start_time";
  schema.complete_time_column = "complete_time";
  schema.timestamp_format = TimestampFormat::iso8601;
  schema.universal_event_attrs = {{"resource", AttrType::categorical}};
  schema.event_specific_attrs = {{"cost", AttrType::numerical}, {"doc_type", AttrType::categorical}};
  schema.sequence_attrs = {{"amount", AttrType::numerical}, {"segment", AttrType::categorical}};
  schema.label_column = "outcome";
  log.binning.unique_op = BinningPolicy::Compare::less;
  log.binning.unique_value = 5;
  log.binning.n_quantile_bins = 4;

  const auto counts = class_counts(spec.n_cases, class_priors(spec.n_classes, spec.imbalance_ratio));
  std::vector<int> labels;
  for (int c = 0; c < spec.n_classes; ++c) labels.insert(labels.end(), static_cast<std::size_t>(counts[static_cast<std::size_t>(c)]), c);

  std::mt19937_64 rng(spec.seed);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int act_width = spec.n_activities > 99 ? 3 : 2;
  const int class_width = spec.n_classes > 9 ? 2 : 1;
  const double epoch_2024 = 1704067200.0;  // 2024-01-01T00:00:00Z
  const char* segments[] = {"retail", "business", "public"};
  const char* doc_types[] = {"form", "letter", "email"};

  for (int i = 0; i < spec.n_cases; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    Trace t;
    t.case_id = numbered("case_", i + 1, 5);
    t.label = numbered("class_", label, class_width);

    double amount = std::round(unit(rng) * 1000.0 * 100.0) / 100.0;
    if (spec.rule == LabelRule::graph_attribute_threshold) {
      amount = std::round((label * 100.0 + 10.0 + 80.0 * unit(rng)) * 100.0) / 100.0;
    }
    char amount_text[32];
    std::snprintf(amount_text, sizeof amount_text, "%.2f", amount);
    t.sequence_values = {std::string(amount_text), std::string(segments[uniform_int(0, 2)])};

    const int length = uniform_int(3, 8);
    std::vector<std::string> activities;
    for (int k = 0; k < length; ++k) activities.push_back(numbered("act_", uniform_int(0, n_base - 1), act_width));
    if (spec.rule == LabelRule::activity_presence && label > 0) {
      const int pos = uniform_int(0, length - 1);
      activities[static_cast<std::size_t>(pos)] = numbered("act_", n_base + label - 1, act_width);
    }

    // Durations in whole minutes.
    std::vector<double> minutes(static_cast<std::size_t>(length));
    if (spec.rule == LabelRule::duration_threshold) {
      // Case spans fall into disjoint bands of 8 hours per class.
      const double total = 60.0 * (8.0 * label + 1.0 + 6.0 * unit(rng));
      std::vector<double> share(static_cast<std::size_t>(length));
      for (auto& s : share) s = 0.2 + unit(rng);
      const double sum_share = std::accumulate(share.begin(), share.end(), 0.0);
      double used = 0;
      for (int k = 0; k < length; ++k) {
        double m = k + 1 == length ? total - used : std::round(total * share[static_cast<std::size_t>(k)] / sum_share);
        m = std::max(m, 1.0);
        minutes[static_cast<std::size_t>(k)] = m;
        used += m;
      }
    } else {
      for (auto& m : minutes) m = unit(rng) < 0.3 ? uniform_int(1, 4) : uniform_int(5, 240);
    }

    double start = epoch_2024 + 60.0 * uniform_int(0, 180 * 24 * 60);
    for (int k = 0; k < length; ++k) {
      Event e;
      e.activity = activities[static_cast<std::size_t>(k)];
      e.start = start;
      e.complete = start + 60.0 * minutes[static_cast<std::size_t>(k)];
      char cost_text[32];
      std::snprintf(cost_text, sizeof cost_text, "%.2f", 5.0 + 95.0 * unit(rng));
      const bool has_cost = unit(rng) < 0.7;
      const bool has_doc = unit(rng) < 0.6;
      e.attrs = {numbered("R", uniform_int(1, 6), 1),
                 has_cost ? std::optional<std::string>(cost_text) : std::nullopt,
                 has_doc ? std::optional<std::string>(doc_types[uniform_int(0, 2)]) : std::nullopt};
      t.events.push_back(std::move(e));
      // Back-to-back execution; other rules occasionally start the next
      // event in parallel with this one.
      const bool parallel = spec.rule != LabelRule::duration_threshold && unit(rng) < 0.1;
      if (!parallel) start += 60.0 * minutes[static_cast<std::size_t>(k)];
    }
    log.traces.push_back(std::move(t));
  }
  return log;
}

}  // namespace hgnn
