#pragma once

// Study orchestration: sampling, training, pruning, persistence and ranking.

#include "hgnn/config.hpp"
#include "hgnn/eventlog.hpp"
#include "hgnn/search_space.hpp"
#include "hgnn/tpe.hpp"
#include "hgnn/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hgnn {

class StudyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrialState { running, complete, pruned, failed };
std::string to_string(TrialState s);
TrialState trial_state_from_string(const std::string& name);

struct TrialRecord {
  int index = 0;
  Assignment params;
  Intermediates intermediate;  // (epoch, primary metric), epochs increasing
  std::optional<MetricsReport> final;
  TrialState state = TrialState::running;
  std::uint64_t seed = 0;
  int best_epoch = 0;
  std::string error;
};

nlohmann::json trial_to_json(const TrialRecord& t, const SearchSpace& space);
TrialRecord trial_from_json(const nlohmann::json& j);

struct RankingPolicy {
  PrimaryMetric primary = PrimaryMetric::accuracy;
};

RankingPolicy balanced_policy();
RankingPolicy imbalanced_policy();
RankingPolicy policy_from_string(const std::string& name);  // balanced | imbalanced
std::string to_string(const RankingPolicy& p);

/// -1 when a ranks before b, 1 when after, 0 on a full tie. Order: higher
/// primary metric, lower mean loss, lower loss std.
int compare_reports(const MetricsReport& a, const MetricsReport& b, const RankingPolicy& policy);

/// Sampler objective of a trial: the final primary metric when complete, the
/// last intermediate value when pruned, nullopt otherwise.
std::optional<double> trial_objective(const TrialRecord& t, const RankingPolicy& policy);

/// Index into `trials` of the best completed trial (ties: lower trial index).
std::optional<std::size_t> best_trial(const std::vector<TrialRecord>& trials, const RankingPolicy& policy);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

struct StudyConfig {
  Architecture architecture = Architecture::one_level;
  OperatorKind op = OperatorKind::gcn;
  int n_trials = 200;
  int max_epochs = 300;
  int patience = 30;
  std::uint64_t seed = 0;
  RankingPolicy policy;
  TpeOptions tpe;
  MedianPrunerOptions pruner;
  bool pruning = true;
  int workers = 1;
  std::string trials_path;  // JSON lines; empty keeps the study in memory
  bool resume = false;
  bool retrain = true;
  int retrain_epochs = 0;  // 0 uses max_epochs
};

struct StudyResult {
  std::vector<TrialRecord> trials;
  std::size_t best_index = 0;  // into trials
  ModelConfig best_config;
  MetricsReport tuned_metrics;
  std::optional<TrainOutcome> retrained;
};

/// Per-trial progress callback (index, state, primary metric or NaN).
using TrialCallback = std::function<void(const TrialRecord&)>;

/// Runs the remaining trials up to n_trials, ranks the completed ones and
/// retrains the winner for the full epoch budget without early stopping.
/// Throws StudyError when no trial completes.
StudyResult run_study(const StudyConfig& config, const EncodedDataset& data, const TrialCallback& progress = {});

/// Reads a trials file; a missing file yields no records.
std::vector<TrialRecord> load_trials(const std::string& path);

using GridKey = std::pair<Architecture, OperatorKind>;

std::string grid_key_label(const GridKey& key);

/// Orders entries by the policy, then by lexical key label.
std::vector<std::pair<GridKey, MetricsReport>> rank_models(const std::map<GridKey, MetricsReport>& reports,
                                                           const RankingPolicy& policy);

}  // namespace hgnn
