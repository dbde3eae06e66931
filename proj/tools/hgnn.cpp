// hgnn: encode event logs, tune and train graph hypermodels, run the grid.

#include "hgnn/config.hpp"
#include "hgnn/eventlog.hpp"
#include "hgnn/hypermodel.hpp"
#include "hgnn/report.hpp"
#include "hgnn/study.hpp"
#include "hgnn/synthetic.hpp"
#include "hgnn/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hgnn;

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitFailed = 3;
constexpr int kExitNoCell = 4;

/// Raised for conditions with a documented exit code.
struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("'" + path + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

LogSchema load_schema(const std::string& path) {
  LogSchema s;
  try {
    s = read_json_file(path).get<LogSchema>();
  } catch (const json::exception& e) {
    throw SchemaError("schema '" + path + "': " + e.what());
  }
  s.validate();
  return s;
}

BinningPolicy load_binning(const std::string& path) {
  if (path.empty()) return BinningPolicy{};
  try {
    return read_json_file(path).get<BinningPolicy>();
  } catch (const json::exception& e) {
    throw SchemaError("binning policy '" + path + "': " + e.what());
  }
}

struct DataArgs {
  std::string data;
  std::string schema;
  std::string bins;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--data", d.data, "Encoded dataset (JSON) or raw CSV log when --schema is given")
      ->required()
      ->envname("HGNN_DATA");
  cmd->add_option("--schema", d.schema, "Schema JSON; treats --data as a CSV log")->envname("HGNN_SCHEMA");
  cmd->add_option("--bins", d.bins, "Duration binning policy JSON")->envname("HGNN_BINS");
  cmd->add_option("--train-fraction", d.train_fraction, "Train share when encoding on the fly")->default_val(0.8);
  cmd->add_option("--split-seed", d.split_seed, "Split seed when encoding on the fly")->default_val(0);
}

EncodedDataset load_data(const DataArgs& d) {
  if (d.schema.empty()) return load_dataset(d.data);
  const LogSchema schema = load_schema(d.schema);
  const auto traces = parse_log_file(d.data, schema);
  EncodeOptions opt;
  opt.train_fraction = d.train_fraction;
  opt.seed = d.split_seed;
  std::vector<std::string> warnings;
  auto ds = build_dataset(traces, schema, load_binning(d.bins), opt, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return ds;
}

InputDims input_dims(const EncodedDataset& d) {
  const auto dims = d.dims();
  return {dims.node_features, dims.graph_features, dims.n_bins, dims.n_activities};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_metrics(const std::string& label, const MetricsReport& m) {
  std::cout << label << ": accuracy " << fmt(m.accuracy) << ", weighted F1 " << fmt(m.weighted_f1) << ", loss "
            << fmt(m.mean_loss) << " (std " << fmt(m.loss_std) << ")\n";
}

// ---- synth --------------------------------------------------------------------

struct SynthArgs {
  SyntheticSpec spec;
  std::string rule = "presence";
  std::string out = "log.csv";
  std::string schema_out = "schema.json";
  std::string bins_out = "bins.json";
};

int cmd_synth(const SynthArgs& a) {
  SyntheticSpec spec = a.spec;
  spec.rule = label_rule_from_string(a.rule);
  const SyntheticLog log = generate_synthetic_log(spec);
  std::ostringstream csv;
  write_log_csv(csv, log.traces, log.schema);
  write_text(a.out, csv.str());
  write_text(a.schema_out, json(log.schema).dump(2) + "\n");
  write_text(a.bins_out, json(log.binning).dump(2) + "\n");
  std::cout << "wrote " << log.traces.size() << " cases to " << a.out << '\n';
  return 0;
}

// ---- encode -------------------------------------------------------------------

struct EncodeArgs {
  DataArgs data;
  std::string out = "dataset.json";
  bool stats = false;
  int prefix_length = 0;
};

int cmd_encode(const EncodeArgs& a) {
  if (a.data.schema.empty()) throw SchemaError("encode: --schema is required");
  const LogSchema schema = load_schema(a.data.schema);
  const auto traces = parse_log_file(a.data.data, schema);
  EncodeOptions opt;
  opt.train_fraction = a.data.train_fraction;
  opt.seed = a.data.split_seed;
  opt.prefix_length = a.prefix_length;
  std::vector<std::string> warnings;
  const auto ds = build_dataset(traces, schema, load_binning(a.data.bins), opt, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  save_dataset(ds, a.out);
  const auto d = ds.dims();
  std::cout << "d_N=" << d.node_features << " d_G=" << d.graph_features << " n_bins=" << d.n_bins
            << " n_activities=" << d.n_activities << " n_classes=" << d.n_classes << '\n';
  std::cout << "train=" << ds.train.size() << " validation=" << ds.validation.size() << '\n';
  if (a.stats) {
    const auto counts = ds.class_counts();
    const double total = static_cast<double>(ds.train.size() + ds.validation.size());
    std::cout << "class distribution:\n";
    for (std::size_t c = 0; c < counts.size(); ++c) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "  %-20s %6d  %6.2f%%\n", ds.encoder.class_names[c].c_str(), counts[c],
                    100.0 * counts[c] / total);
      std::cout << buf;
    }
  }
  return 0;
}

// ---- tune ---------------------------------------------------------------------

struct StudyArgs {
  DataArgs data;
  std::string arch = "one";
  std::string op = "gcn";
  int trials = 200;
  int epochs = 300;
  int patience = 30;
  std::uint64_t seed = 0;
  std::string policy = "balanced";
  std::string out = "out";
  bool resume = false;
  int workers = 1;
  int retrain_epochs = 0;
  bool no_prune = false;
  int total_budget = 0;
};

void add_study_options(CLI::App* cmd, StudyArgs& a) {
  add_data_options(cmd, a.data);
  cmd->add_option("--trials", a.trials, "Trials per study")->default_val(200)->envname("HGNN_TRIALS");
  cmd->add_option("--epochs", a.epochs, "Maximum epochs per trial")->default_val(300)->envname("HGNN_EPOCHS");
  cmd->add_option("--patience", a.patience, "Early-stopping patience")->default_val(30)->envname("HGNN_PATIENCE");
  cmd->add_option("--seed", a.seed, "Study seed")->default_val(0)->envname("HGNN_SEED");
  cmd->add_option("--policy", a.policy, "Ranking policy")
      ->check(CLI::IsMember({"balanced", "imbalanced"}))
      ->default_val("balanced")
      ->envname("HGNN_POLICY");
  cmd->add_option("--out", a.out, "Output directory")->default_val("out")->envname("HGNN_OUT");
  cmd->add_option("--workers", a.workers, "Concurrent workers")->default_val(1)->envname("HGNN_WORKERS");
  cmd->add_option("--retrain-epochs", a.retrain_epochs, "Epochs for retraining the winner (default --epochs)");
  cmd->add_flag("--no-prune", a.no_prune, "Disable median pruning");
}

StudyConfig study_config(const StudyArgs& a) {
  StudyConfig sc;
  sc.architecture = architecture_from_string(a.arch);
  sc.op = operator_from_string(a.op);
  sc.n_trials = a.trials;
  sc.max_epochs = a.epochs;
  sc.patience = a.patience;
  sc.seed = a.seed;
  sc.policy = policy_from_string(a.policy);
  sc.workers = a.workers;
  sc.resume = a.resume;
  sc.retrain_epochs = a.retrain_epochs;
  sc.pruning = !a.no_prune;
  return sc;
}

int cmd_tune(const StudyArgs& a) {
  const EncodedDataset ds = load_data(a.data);
  StudyConfig sc = study_config(a);
  const fs::path out = a.out;
  fs::create_directories(out);
  sc.trials_path = (out / "trials.jsonl").string();
  StudyResult r;
  try {
    r = run_study(sc, ds, [](const TrialRecord& t) {
      std::cerr << "trial " << t.index << ": " << to_string(t.state);
      if (t.final) std::cerr << " (accuracy " << fmt(t.final->accuracy) << ", F1 " << fmt(t.final->weighted_f1) << ")";
      if (!t.error.empty()) std::cerr << " [" << t.error << "]";
      std::cerr << '\n';
    });
  } catch (const StudyError& e) {
    throw ExitError(kExitFailed, e.what());
  }
  const auto& winner = r.trials[r.best_index];
  save_model_config(r.best_config, (out / "best_config.json").string());

  json metrics = {{"best_trial", winner.index}, {"tuned", r.tuned_metrics}, {"tuned_best_epoch", winner.best_epoch}};
  DumpSummary summary{winner.best_epoch, r.tuned_metrics.accuracy, r.tuned_metrics.mean_loss, r.tuned_metrics.loss_std};
  if (r.retrained) {
    metrics["retrained_status"] = to_string(r.retrained->status);
    if (r.retrained->status == TrainStatus::completed) {
      const auto& b = r.retrained->best_metrics;
      metrics["retrained"] = b;
      metrics["retrained_best_epoch"] = r.retrained->best_epoch;
      metrics["retrained_final"] = r.retrained->epoch_history.back();
      summary = {r.retrained->best_epoch, b.accuracy, b.mean_loss, b.loss_std};
    } else {
      metrics["retrained_error"] = r.retrained->failure;
    }
  }
  write_text(out / "retrained_metrics.json", metrics.dump(2) + "\n");
  write_text(out / "best_config.txt", format_best_config(r.best_config, input_dims(ds), summary));

  std::cout << "best trial: " << winner.index << '\n';
  print_metrics("tuned", r.tuned_metrics);
  if (r.retrained && r.retrained->status == TrainStatus::completed) {
    print_metrics("retrained", r.retrained->best_metrics);
  } else if (r.retrained) {
    throw ExitError(kExitFailed, "retraining failed: " + r.retrained->failure);
  }
  return 0;
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  DataArgs data;
  std::string config;
  int epochs = 300;
  int patience = 0;
  std::uint64_t seed = 0;
  std::string policy = "balanced";
  std::string out = "metrics.json";
  std::string history;
};

int cmd_train(const TrainArgs& a) {
  const EncodedDataset ds = load_data(a.data);
  const ModelConfig config = load_model_config(a.config);
  Model model = Model::build(config, input_dims(ds), derive_seed(a.seed, 0, 6));
  TrainOptions opt;
  opt.max_epochs = a.epochs;
  opt.patience = a.patience;
  opt.seed = derive_seed(a.seed, 0, 7);
  opt.primary = policy_from_string(a.policy).primary;
  std::ofstream history;
  if (!a.history.empty()) {
    history.open(a.history);
    opt.history = &history;
  }
  const TrainOutcome o = train(model, ds.train, ds.validation, opt);
  json j = {{"status", to_string(o.status)}, {"epochs_run", o.epoch_history.size()}};
  if (!o.epoch_history.empty()) {
    j["best_epoch"] = o.best_epoch;
    j["best"] = o.best_metrics;
    j["final"] = o.epoch_history.back();
  }
  if (o.status == TrainStatus::failed) j["error"] = o.failure;
  write_text(a.out, j.dump(2) + "\n");
  if (o.status == TrainStatus::failed) throw ExitError(kExitFailed, o.failure);
  std::cout << "best epoch: " << o.best_epoch << '\n';
  print_metrics("best", o.best_metrics);
  print_metrics("final", o.epoch_history.back());
  return 0;
}

// ---- grid and report ----------------------------------------------------------

void print_ranking(const GridReport& grid) {
  std::map<GridKey, MetricsReport> cells;
  for (const auto& c : grid.cells) {
    if (c.metrics) cells[{c.architecture, c.op}] = *c.metrics;
  }
  int rank = 1;
  for (const auto& [key, m] : rank_models(cells, grid.policy)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%2d. %-2s/%-5s accuracy %.4f  F1 %.4f  loss %.4f  std %.4f\n", rank++,
                  short_label(key.first).c_str(), to_string(key.second).c_str(), m.accuracy, m.weighted_f1,
                  m.mean_loss, m.loss_std);
    std::cout << buf;
  }
}

int cmd_grid(const StudyArgs& a) {
  const EncodedDataset ds = load_data(a.data);
  GridOptions g;
  g.base = study_config(a);
  g.base.workers = 1;
  g.trials_per_cell = a.trials;
  g.total_budget = a.total_budget;
  g.cell_workers = a.workers;
  g.out_dir = a.out;
  const GridReport grid = run_grid(g, ds, [](const GridCell& c) {
    std::cerr << short_label(c.architecture) << "/" << to_string(c.op) << ": "
              << (c.metrics ? "done" : "failed (" + c.error + ")") << '\n';
  });
  std::ostringstream csv;
  write_grid_csv(grid, csv);
  write_text(fs::path(a.out) / "grid.csv", csv.str());
  write_figures(grid, a.out);
  print_ranking(grid);
  if (grid.completed() == 0) throw ExitError(kExitNoCell, "grid: no cell completed");
  return 0;
}

struct ReportArgs {
  std::string grid = "out/grid.csv";
  std::string policy = "balanced";
  std::string out = "out";
};

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.grid);
  if (!in) throw SchemaError("cannot open '" + a.grid + "'");
  const GridReport grid = read_grid_csv(in, policy_from_string(a.policy));
  for (const auto& p : write_figures(grid, a.out)) std::cout << "wrote " << p.string() << '\n';
  print_ranking(grid);
  if (grid.completed() == 0) throw ExitError(kExitNoCell, "report: no completed cell");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph hypermodels for outcome prediction on event logs"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic event log with schema and binning files");
  s->add_option("--cases", synth.spec.n_cases, "Number of cases")->default_val(100);
  s->add_option("--activities", synth.spec.n_activities, "Activity vocabulary size")->default_val(8);
  s->add_option("--classes", synth.spec.n_classes, "Number of outcome classes")->default_val(2);
  s->add_option("--ratio", synth.spec.imbalance_ratio, "Majority to minority ratio")->default_val(1.0);
  s->add_option("--rule", synth.rule, "Labelling rule")
      ->check(CLI::IsMember({"presence", "duration", "attribute"}))
      ->default_val("presence");
  s->add_option("--seed", synth.spec.seed, "Generator seed")->default_val(0)->envname("HGNN_SEED");
  s->add_option("--out", synth.out, "CSV path")->default_val("log.csv");
  s->add_option("--schema-out", synth.schema_out, "Schema JSON path")->default_val("schema.json");
  s->add_option("--bins-out", synth.bins_out, "Binning policy JSON path")->default_val("bins.json");

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Encode a CSV log into a cached dataset");
  add_data_options(e, enc.data);
  e->add_option("--out", enc.out, "Dataset path")->default_val("dataset.json")->envname("HGNN_OUT");
  e->add_option("--prefix-length", enc.prefix_length, "Keep only the first events of each case")->default_val(0);
  e->add_flag("--stats", enc.stats, "Print the class distribution");

  StudyArgs tune;
  auto* t = app.add_subcommand("tune", "Run one hyperparameter study");
  add_study_options(t, tune);
  t->add_option("--arch", tune.arch, "Architecture")
      ->check(CLI::IsMember({"one", "two", "two-pseudo", "two-embed"}))
      ->default_val("one")
      ->envname("HGNN_ARCH");
  t->add_option("--op", tune.op, "Operator")
      ->check(CLI::IsMember({"gcn", "graph", "sage", "tag", "cheb", "gin"}))
      ->default_val("gcn")
      ->envname("HGNN_OP");
  t->add_flag("--resume", tune.resume, "Continue the trials file in --out");

  TrainArgs tr;
  auto* r = app.add_subcommand("train", "Train one model configuration");
  add_data_options(r, tr.data);
  r->add_option("--config", tr.config, "ModelConfig JSON")->required()->envname("HGNN_CONFIG");
  r->add_option("--epochs", tr.epochs, "Epochs")->default_val(300)->envname("HGNN_EPOCHS");
  r->add_option("--patience", tr.patience, "Early-stopping patience (0 trains every epoch)")->default_val(0);
  r->add_option("--seed", tr.seed, "Seed")->default_val(0)->envname("HGNN_SEED");
  r->add_option("--policy", tr.policy, "Metric for the best epoch")
      ->check(CLI::IsMember({"balanced", "imbalanced"}))
      ->default_val("balanced")
      ->envname("HGNN_POLICY");
  r->add_option("--out", tr.out, "Metrics JSON path")->default_val("metrics.json");
  r->add_option("--history", tr.history, "Per-epoch JSON lines");

  StudyArgs grid;
  auto* g = app.add_subcommand("grid", "Run all 24 architecture/operator studies");
  add_study_options(g, grid);
  g->add_option("--total-budget", grid.total_budget, "Trials shared evenly across cells")->default_val(0);

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Re-render figures from a grid CSV");
  p->add_option("--grid", rep.grid, "Grid CSV")->default_val("out/grid.csv");
  p->add_option("--policy", rep.policy, "Metric coloring the heatmap")
      ->check(CLI::IsMember({"balanced", "imbalanced"}))
      ->default_val("balanced")
      ->envname("HGNN_POLICY");
  p->add_option("--out", rep.out, "Figure directory")->default_val("out")->envname("HGNN_OUT");

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (e->parsed()) return cmd_encode(enc);
    if (t->parsed()) return cmd_tune(tune);
    if (r->parsed()) return cmd_train(tr);
    if (g->parsed()) return cmd_grid(grid);
    if (p->parsed()) return cmd_report(rep);
  } catch (const ExitError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return ex.code;
  } catch (const ParseError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitSchema;
  } catch (const SchemaError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitSchema;
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitSchema;
  } catch (const TrainingError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitFailed;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
