#include "hgnn/study.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

namespace hgnn {

using nlohmann::json;

std::string to_string(TrialState s) {
  switch (s) {
    case TrialState::running: return "running";
    case TrialState::complete: return "complete";
    case TrialState::pruned: return "pruned";
    case TrialState::failed: return "failed";
  }
  return "?";
}

TrialState trial_state_from_string(const std::string& name) {
  for (auto s : {TrialState::running, TrialState::complete, TrialState::pruned, TrialState::failed}) {
    if (to_string(s) == name) return s;
  }
  throw StudyError("unknown trial state '" + name + "'");
}

json trial_to_json(const TrialRecord& t, const SearchSpace& space) {
  json j = {{"trial", t.index},
            {"state", to_string(t.state)},
            {"seed", t.seed},
            {"params", assignment_to_json(space, t.params)}};
  json inter = json::array();
  for (const auto& [e, v] : t.intermediate) inter.push_back({e, v});
  j["intermediate"] = inter;
  if (t.final) {
    j["final"] = *t.final;
    j["best_epoch"] = t.best_epoch;
  }
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

TrialRecord trial_from_json(const json& j) {
  TrialRecord t;
  t.index = j.at("trial").get<int>();
  t.state = trial_state_from_string(j.at("state").get<std::string>());
  t.seed = j.at("seed").get<std::uint64_t>();
  t.params = assignment_from_json(j.at("params"));
  for (const auto& p : j.at("intermediate")) t.intermediate.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
  if (j.contains("final")) {
    t.final = j.at("final").get<MetricsReport>();
    t.best_epoch = j.value("best_epoch", 0);
  }
  t.error = j.value("error", std::string());
  return t;
}

RankingPolicy balanced_policy() { return {PrimaryMetric::accuracy}; }
RankingPolicy imbalanced_policy() { return {PrimaryMetric::weighted_f1}; }

RankingPolicy policy_from_string(const std::string& name) {
  if (name == "balanced") return balanced_policy();
  if (name == "imbalanced") return imbalanced_policy();
  throw StudyError("unknown policy '" + name + "' (expected balanced or imbalanced)");
}

std::string to_string(const RankingPolicy& p) {
  return p.primary == PrimaryMetric::accuracy ? "balanced" : "imbalanced";
}

int compare_reports(const MetricsReport& a, const MetricsReport& b, const RankingPolicy& policy) {
  const double pa = primary_value(a, policy.primary), pb = primary_value(b, policy.primary);
  if (pa != pb) return pa > pb ? -1 : 1;
  if (a.mean_loss != b.mean_loss) return a.mean_loss < b.mean_loss ? -1 : 1;
  if (a.loss_std != b.loss_std) return a.loss_std < b.loss_std ? -1 : 1;
  return 0;
}

std::optional<double> trial_objective(const TrialRecord& t, const RankingPolicy& policy) {
  if (t.state == TrialState::complete && t.final) return primary_value(*t.final, policy.primary);
  if (t.state == TrialState::pruned && !t.intermediate.empty()) return t.intermediate.back().second;
  return std::nullopt;
}

std::optional<std::size_t> best_trial(const std::vector<TrialRecord>& trials, const RankingPolicy& policy) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    if (t.state != TrialState::complete || !t.final) continue;
    if (!best) {
      best = i;
      continue;
    }
    const int c = compare_reports(*t.final, *trials[*best].final, policy);
    if (c < 0 || (c == 0 && t.index < trials[*best].index)) best = i;
  }
  return best;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

std::vector<TrialRecord> load_trials(const std::string& path) {
  std::vector<TrialRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(trial_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw StudyError("trials file '" + path + "' line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

InputDims input_dims(const EncodedDataset& data) {
  const auto d = data.dims();
  return {d.node_features, d.graph_features, d.n_bins, d.n_activities};
}

class StudyLedger {
 public:
  StudyLedger(const SearchSpace& space, const std::string& path) : space_(space) {
    if (!path.empty()) out_.open(path, std::ios::trunc);
    if (!path.empty() && !out_) throw StudyError("cannot write trials file '" + path + "'");
    path_ = path;
  }

  void append(const TrialRecord& t) {
    std::lock_guard lock(mu_);
    records_.push_back(t);
    if (out_.is_open()) {
      out_ << trial_to_json(t, space_).dump() << '\n';
      out_.flush();
    }
  }

  std::vector<TrialRecord> snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  std::vector<TrialRecord> take() {
    std::lock_guard lock(mu_);
    auto out = records_;
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    return out;
  }

 private:
  const SearchSpace& space_;
  std::string path_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::vector<TrialRecord> records_;
};

TrialRecord run_trial(int index, const StudyConfig& config, const SearchSpace& space, const EncodedDataset& data,
                      const std::vector<TrialRecord>& snapshot,
                      const std::function<std::vector<TrialRecord>()>& peer_source) {
  TrialRecord t;
  t.index = index;
  t.seed = derive_seed(config.seed, static_cast<std::uint64_t>(index), 2);

  std::vector<Observation> history;
  for (const auto& r : snapshot) {
    if (const auto obj = trial_objective(r, config.policy)) history.push_back({r.params, *obj});
  }
  std::mt19937_64 suggest_rng(derive_seed(config.seed, static_cast<std::uint64_t>(index), 1));
  t.params = tpe_suggest(space, history, suggest_rng, config.tpe);

  try {
    const auto dims = input_dims(data);
    const ModelConfig mc = config_from_assignment(config.architecture, config.op, t.params, data.dims().n_classes);
    Model model = Model::build(mc, dims, t.seed);
    TrainOptions options;
    options.max_epochs = config.max_epochs;
    options.patience = config.patience;
    options.primary = config.policy.primary;
    options.seed = derive_seed(t.seed, 3);
    options.trial_index = index;
    std::vector<Intermediates> peer_values;
    bool peers_loaded = false;
    options.pruning_hook = [&](int epoch, double metric) {
      t.intermediate.emplace_back(epoch, metric);
      if (!config.pruning || epoch < config.pruner.warmup_epochs) return false;
      if (!peers_loaded) {
        for (const auto& r : peer_source()) {
          if (r.state == TrialState::complete || r.state == TrialState::pruned) peer_values.push_back(r.intermediate);
        }
        peers_loaded = true;
      }
      std::vector<const Intermediates*> peers;
      for (const auto& v : peer_values) peers.push_back(&v);
      return median_should_prune(epoch, metric, peers, config.pruner);
    };
    const TrainOutcome outcome = train(model, data.train, data.validation, options);
    switch (outcome.status) {
      case TrainStatus::completed:
        t.state = TrialState::complete;
        t.final = outcome.best_metrics;
        t.best_epoch = outcome.best_epoch;
        break;
      case TrainStatus::pruned: t.state = TrialState::pruned; break;
      case TrainStatus::failed:
        t.state = TrialState::failed;
        t.error = outcome.failure;
        break;
    }
  } catch (const std::exception& e) {
    t.state = TrialState::failed;
    t.error = e.what();
  }
  return t;
}

}  // namespace

StudyResult run_study(const StudyConfig& config, const EncodedDataset& data, const TrialCallback& progress) {
  if (config.n_trials < 1) throw StudyError("study: n_trials must be >= 1");
  if (data.train.empty() || data.validation.empty()) throw StudyError("study: dataset has an empty split");
  const SearchSpace space = build_search_space(config.architecture, config.op);

  std::vector<TrialRecord> previous;
  if (config.resume && !config.trials_path.empty()) {
    for (auto& r : load_trials(config.trials_path)) {
      if (r.state != TrialState::running && r.index >= 0 && r.index < config.n_trials) previous.push_back(std::move(r));
    }
    std::sort(previous.begin(), previous.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    previous.erase(std::unique(previous.begin(), previous.end(),
                               [](const auto& a, const auto& b) { return a.index == b.index; }),
                   previous.end());
  }
  StudyLedger ledger(space, config.trials_path);
  std::set<int> done;
  for (const auto& r : previous) {
    ledger.append(r);
    done.insert(r.index);
  }
  std::vector<int> pending;
  for (int i = 0; i < config.n_trials; ++i) {
    if (!done.count(i)) pending.push_back(i);
  }

  auto peers = [&ledger]() { return ledger.snapshot(); };
  if (config.workers <= 1) {
    for (int index : pending) {
      const auto snapshot = ledger.snapshot();
      auto fixed = [&snapshot]() { return snapshot; };
      TrialRecord t = run_trial(index, config, space, data, snapshot, fixed);
      ledger.append(t);
      if (progress) progress(t);
    }
  } else {
    std::mutex queue_mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (int w = 0; w < config.workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          int index;
          {
            std::lock_guard lock(queue_mu);
            if (next >= pending.size()) return;
            index = pending[next++];
          }
          TrialRecord t = run_trial(index, config, space, data, ledger.snapshot(), peers);
          ledger.append(t);
          if (progress) {
            std::lock_guard lock(queue_mu);
            progress(t);
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  StudyResult result;
  result.trials = ledger.take();
  const auto best = best_trial(result.trials, config.policy);
  if (!best) {
    std::string why = "study: no trial completed";
    for (const auto& t : result.trials) {
      why += "\n  trial " + std::to_string(t.index) + ": " + to_string(t.state);
      if (!t.error.empty()) why += " (" + t.error + ")";
    }
    throw StudyError(why);
  }
  result.best_index = *best;
  const auto& winner = result.trials[*best];
  result.best_config = config_from_assignment(config.architecture, config.op, winner.params, data.dims().n_classes);
  result.tuned_metrics = *winner.final;

  if (config.retrain) {
    const std::uint64_t seed = derive_seed(config.seed, std::numeric_limits<std::uint32_t>::max(), 4);
    Model model = Model::build(result.best_config, input_dims(data), seed);
    TrainOptions options;
    options.max_epochs = config.retrain_epochs > 0 ? config.retrain_epochs : config.max_epochs;
    options.patience = 0;
    options.primary = config.policy.primary;
    options.seed = derive_seed(seed, 3);
    result.retrained = train(model, data.train, data.validation, options);
  }
  return result;
}

std::string grid_key_label(const GridKey& key) { return to_string(key.first) + "/" + to_string(key.second); }

std::vector<std::pair<GridKey, MetricsReport>> rank_models(const std::map<GridKey, MetricsReport>& reports,
                                                           const RankingPolicy& policy) {
  std::vector<std::pair<GridKey, MetricsReport>> out(reports.begin(), reports.end());
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    const int c = compare_reports(a.second, b.second, policy);
    if (c != 0) return c < 0;
    return grid_key_label(a.first) < grid_key_label(b.first);
  });
  return out;
}

}  // namespace hgnn
