#pragma once

// Model and training configuration, JSON round-trip and the plain-text dump.

#include "hgnn/operators.hpp"
#include "hgnn/tensor.hpp"

#include "json.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgnn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Architecture { one_level, two_level, two_level_pseudo, two_level_embedding };

inline constexpr Architecture kAllArchitectures[] = {
    Architecture::one_level, Architecture::two_level, Architecture::two_level_pseudo,
    Architecture::two_level_embedding};

std::string to_string(Architecture a);
/// Accepts the canonical names and the CLI spellings one/two/two-pseudo/two-embed.
Architecture architecture_from_string(const std::string& name);
/// Short label used in tables: O, T, TP, TE.
std::string short_label(Architecture a);
bool is_two_level(Architecture a);

struct BatchNormSpec {
  double momentum = 0.1;
  double eps = 1e-5;
};

struct LayerSpec {
  int units = 16;
  ActivationKind activation = ActivationKind::relu;
  std::optional<double> dropout;
  std::optional<BatchNormSpec> batch_norm;
  bool skip = false;  // GNN stacks only
};

enum class OptimizerKind { adam, sgd, rmsprop };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double l1_lambda = 0.0;
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;   // adam
  double momentum = 0.0;  // sgd, rmsprop
  double alpha = 0.99;    // rmsprop
  double eps = 1e-8;      // adam (fixed), rmsprop (tuned)
};

// `constant` keeps the learning rate fixed; it is not part of the search space.
enum class SchedulerKind {
  constant,
  step,
  exponential,
  reduce_on_plateau,
  polynomial,
  cosine_annealing,
  cyclic,
  one_cycle
};
std::string to_string(SchedulerKind k);
SchedulerKind scheduler_from_string(const std::string& name);

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::constant;
  int step_size = 10;          // step
  double gamma = 0.9;          // step, exponential
  double factor = 0.5;         // plateau
  int patience = 10;           // plateau
  double threshold = 1e-3;     // plateau
  double plateau_eps = 1e-8;   // plateau
  double power = 1.0;          // polynomial
  int total_iters = 100;       // polynomial
  int t_max = 50;              // cosine
  double eta_min = 1e-6;       // cosine
  double base_lr = 1e-4;       // cyclic
  double max_lr = 1e-2;        // cyclic, one_cycle
  int step_size_up = 20;       // cyclic
  double pct_start = 0.3;      // one_cycle
  long long total_steps = 0;   // one_cycle; 0 derives batch_size * 1000
};

enum class LossKind { cross_entropy, multi_margin };
std::string to_string(LossKind k);
LossKind loss_from_string(const std::string& name);

struct ModelConfig {
  Architecture architecture = Architecture::one_level;
  OperatorKind op = OperatorKind::gcn;
  std::vector<LayerSpec> gnn_layers;
  // two_level_pseudo: the duration-bin stack; two_level_embedding: the stack
  // over the activity embedding graph.
  std::vector<LayerSpec> aux_gnn_layers;
  std::vector<LayerSpec> concat_gnn_layers;  // two_level_pseudo
  std::vector<LayerSpec> sequence_dense_layers;
  std::vector<LayerSpec> final_dense_layers;
  ReduceMode pooling = ReduceMode::mean;
  int embedding_dim = 0;                     // two_level_embedding
  bool keep_activity_onehot = true;          // two_level_embedding
  Aggregation graph_aggregation = Aggregation::add;  // operator graph
  int K = 0;                                 // tag, cheb
  int output_size = 2;

  OptimizerConfig optimizer;
  SchedulerConfig scheduler;
  LossKind loss = LossKind::cross_entropy;
  int batch_size = 32;

  /// Structural validation; throws ConfigError naming the offending field.
  void validate() const;
};

/// Table-level range violations (units, rates, learning-rate bounds, ...).
/// Empty when every field lies inside the tuning ranges.
std::vector<std::string> range_violations(const ModelConfig& c);

void to_json(nlohmann::json& j, const LayerSpec& l);
void from_json(const nlohmann::json& j, LayerSpec& l);
void to_json(nlohmann::json& j, const OptimizerConfig& o);
void from_json(const nlohmann::json& j, OptimizerConfig& o);
void to_json(nlohmann::json& j, const SchedulerConfig& s);
void from_json(const nlohmann::json& j, SchedulerConfig& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
/// Parses and validates; throws ConfigError on unknown, missing or
/// misplaced conditional fields.
void from_json(const nlohmann::json& j, ModelConfig& c);

ModelConfig load_model_config(const std::string& path);
void save_model_config(const ModelConfig& c, const std::string& path);

struct InputDims {
  int node_features = 0;
  int graph_features = 0;
  int n_bins = 0;
  int n_activities = 0;
};

struct DumpSummary {
  int best_epoch = 0;
  double accuracy = 0;
  double loss = 0;
  double loss_std = 0;
};

std::string operator_display_name(OperatorKind op);
std::string scheduler_display_name(SchedulerKind k);

/// Human-readable listing that starts with "Best hyperparameters found were:".
std::string format_best_config(const ModelConfig& c, const InputDims& dims,
                               const std::optional<DumpSummary>& summary = std::nullopt);

}  // namespace hgnn
