#pragma once

// Losses, optimizers, learning-rate schedules, metrics and the epoch loop.

#include "hgnn/config.hpp"
#include "hgnn/eventlog.hpp"
#include "hgnn/hypermodel.hpp"
#include "hgnn/tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgnn {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- losses -----------------------------------------------------------------

/// Mean softmax cross-entropy of raw logits.
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);
/// Mean over samples of (1/C) * sum_{j != y} max(0, margin - x_y + x_j).
Tensor multi_margin_loss(const Tensor& logits, std::span<const int> labels, double margin = 1.0);
Tensor compute_loss(LossKind kind, const Tensor& logits, std::span<const int> labels);
/// Loss of every row separately.
std::vector<double> per_sample_loss(LossKind kind, const Matrix& logits, std::span<const int> labels);

// ---- optimizers -------------------------------------------------------------

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::vector<Tensor> params);

  /// Applies one update from the parameters' accumulated gradients.
  void step();
  void zero_grad();
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long long steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<Matrix> m_, v_, buf_;
  double lr_;
  long long t_ = 0;
};

// ---- schedulers -------------------------------------------------------------

class Scheduler {
 public:
  /// `planned_steps` is the number of optimizer steps of the whole run; it
  /// caps the one-cycle length.
  Scheduler(const SchedulerConfig& config, double base_lr, long long planned_steps, int batch_size);

  double learning_rate() const { return lr_; }
  /// cyclic and one_cycle advance per batch, the rest per epoch.
  bool per_batch() const;
  void on_batch_end();
  /// `val_loss` feeds reduce-on-plateau; other kinds ignore it.
  void on_epoch_end(double val_loss);

  long long one_cycle_total_steps() const { return total_steps_; }

  /// Closed-form rate after `t` scheduler steps (not for reduce_on_plateau).
  double rate_at(long long t) const;

 private:
  SchedulerConfig config_;
  double base_lr_;
  double lr_;
  long long t_ = 0;
  long long total_steps_ = 0;
  double best_ = 0;
  bool has_best_ = false;
  int bad_epochs_ = 0;
};

// ---- metrics ----------------------------------------------------------------

struct MetricsReport {
  double accuracy = 0;
  double weighted_f1 = 0;
  double mean_loss = 0;
  double loss_std = 0;
  std::vector<double> per_class_f1;
  std::vector<int> support;
};

void to_json(nlohmann::json& j, const MetricsReport& m);
void from_json(const nlohmann::json& j, MetricsReport& m);

/// confusion[t][p] counts samples of true class t predicted as p.
std::vector<std::vector<int>> confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                               int n_classes);
/// Accuracy and F1 scores; F1 of a class with no true or predicted samples is 0.
MetricsReport classification_metrics(std::span<const int> truth, std::span<const int> predicted,
                                     int n_classes);
/// Adds the mean and population standard deviation of `losses`.
void attach_losses(MetricsReport& report, std::span<const double> losses);

std::vector<int> argmax_rows(const Matrix& logits);

/// Runs the model in eval mode over `data`, chunked by `chunk` graphs.
MetricsReport evaluate(Model& model, const std::vector<EncodedGraph>& data, LossKind loss, int chunk = 256);

// ---- training loop ----------------------------------------------------------

enum class PrimaryMetric { accuracy, weighted_f1 };
std::string to_string(PrimaryMetric m);
double primary_value(const MetricsReport& m, PrimaryMetric metric);

enum class TrainStatus { completed, pruned, failed };
std::string to_string(TrainStatus s);

/// Patience counter on a metric where higher is better. An epoch counts as
/// an improvement only when it is strictly better than the best so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Returns true when training should stop after this epoch.
  bool update(double metric);
  int stagnant_epochs() const { return stagnant_; }

 private:
  int patience_;
  bool has_best_ = false;
  double best_ = 0;
  int stagnant_ = 0;
};

struct TrainOptions {
  int max_epochs = 300;
  int patience = 30;  // <= 0 disables early stopping
  PrimaryMetric primary = PrimaryMetric::accuracy;
  std::uint64_t seed = 0;
  /// Called after every epoch with (epoch, primary metric); true prunes.
  std::function<bool(int, double)> pruning_hook;
  std::ostream* history = nullptr;  // JSON lines per epoch
  int trial_index = -1;
};

struct TrainOutcome {
  TrainStatus status = TrainStatus::completed;
  std::string failure;
  int best_epoch = 0;  // 1-based
  MetricsReport best_metrics;
  std::vector<MetricsReport> epoch_history;
  std::vector<double> train_loss;
  std::vector<double> learning_rates;
  bool stopped_early = false;
  double wall_time = 0;
};

/// Index into `history` of the best epoch: highest primary metric, ties
/// broken by lower mean loss, then earlier epoch.
std::size_t best_epoch_index(const std::vector<MetricsReport>& history, PrimaryMetric metric);

/// Trains `model` with the optimizer, schedule, loss and batch size of its
/// config. Non-finite losses end the run with status failed.
TrainOutcome train(Model& model, const std::vector<EncodedGraph>& train_set,
                   const std::vector<EncodedGraph>& val_set, const TrainOptions& options);

}  // namespace hgnn
