#include "hgnn/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace hgnn {

using nlohmann::json;

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::one_level: return "one_level";
    case Architecture::two_level: return "two_level";
    case Architecture::two_level_pseudo: return "two_level_pseudo";
    case Architecture::two_level_embedding: return "two_level_embedding";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& name) {
  if (name == "one_level" || name == "one" || name == "O") return Architecture::one_level;
  if (name == "two_level" || name == "two" || name == "T") return Architecture::two_level;
  if (name == "two_level_pseudo" || name == "two-pseudo" || name == "TP") return Architecture::two_level_pseudo;
  if (name == "two_level_embedding" || name == "two-embed" || name == "TE") {
    return Architecture::two_level_embedding;
  }
  throw ConfigError("unknown architecture '" + name + "'");
}

std::string short_label(Architecture a) {
  switch (a) {
    case Architecture::one_level: return "O";
    case Architecture::two_level: return "T";
    case Architecture::two_level_pseudo: return "TP";
    case Architecture::two_level_embedding: return "TE";
  }
  return "?";
}

bool is_two_level(Architecture a) { return a != Architecture::one_level; }

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer '" + name + "'");
}

std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::constant: return "constant";
    case SchedulerKind::step: return "step";
    case SchedulerKind::exponential: return "exponential";
    case SchedulerKind::reduce_on_plateau: return "reduce_on_plateau";
    case SchedulerKind::polynomial: return "polynomial";
    case SchedulerKind::cosine_annealing: return "cosine_annealing";
    case SchedulerKind::cyclic: return "cyclic";
    case SchedulerKind::one_cycle: return "one_cycle";
  }
  return "?";
}

SchedulerKind scheduler_from_string(const std::string& name) {
  for (auto k : {SchedulerKind::constant, SchedulerKind::step, SchedulerKind::exponential,
                 SchedulerKind::reduce_on_plateau, SchedulerKind::polynomial,
                 SchedulerKind::cosine_annealing, SchedulerKind::cyclic, SchedulerKind::one_cycle}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown scheduler '" + name + "'");
}

std::string to_string(LossKind k) {
  return k == LossKind::cross_entropy ? "cross_entropy" : "multi_margin";
}

LossKind loss_from_string(const std::string& name) {
  if (name == "cross_entropy") return LossKind::cross_entropy;
  if (name == "multi_margin") return LossKind::multi_margin;
  throw ConfigError("unknown loss '" + name + "'");
}

// ---- validation -----------------------------------------------------------

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("config: " + message);
}

void validate_stack(const std::vector<LayerSpec>& layers, const std::string& name, int lo, int hi,
                    bool allow_skip) {
  require(static_cast<int>(layers.size()) >= lo && static_cast<int>(layers.size()) <= hi,
          name + " needs " + std::to_string(lo) + "-" + std::to_string(hi) + " layers, got " +
              std::to_string(layers.size()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = name + "[" + std::to_string(i) + "]";
    require(l.units >= 1, where + ".units must be positive");
    require(l.activation != ActivationKind::identity, where + ".activation must be a searchable activation");
    if (l.dropout) require(*l.dropout >= 0.0 && *l.dropout < 1.0, where + ".dropout must lie in [0, 1)");
    if (l.batch_norm) {
      require(l.batch_norm->momentum >= 0.0 && l.batch_norm->momentum <= 1.0,
              where + ".batch_norm.momentum must lie in [0, 1]");
      require(l.batch_norm->eps > 0.0, where + ".batch_norm.eps must be positive");
    }
    require(allow_skip || !l.skip, where + ".skip is only valid in GNN stacks");
  }
}

}  // namespace

void ModelConfig::validate() const {
  validate_stack(gnn_layers, "gnn_layers", 1, 5, true);
  validate_stack(final_dense_layers, "final_dense_layers", 1, 3, false);
  if (is_two_level(architecture)) {
    validate_stack(sequence_dense_layers, "sequence_dense_layers", 1, 3, false);
  } else {
    require(sequence_dense_layers.empty(), "sequence_dense_layers only apply to two-level architectures");
  }
  const bool aux = architecture == Architecture::two_level_pseudo ||
                   architecture == Architecture::two_level_embedding;
  const std::string aux_name =
      architecture == Architecture::two_level_embedding ? "embedding_gnn_layers" : "pseudo_gnn_layers";
  if (aux) {
    validate_stack(aux_gnn_layers, aux_name, 1, 5, true);
  } else {
    require(aux_gnn_layers.empty(), "auxiliary GNN layers need two_level_pseudo or two_level_embedding");
  }
  if (architecture == Architecture::two_level_pseudo) {
    validate_stack(concat_gnn_layers, "concat_gnn_layers", 1, 5, true);
  } else {
    require(concat_gnn_layers.empty(), "concat_gnn_layers only apply to two_level_pseudo");
  }
  if (architecture == Architecture::two_level_embedding) {
    require(embedding_dim >= 1, "embedding_dim must be positive");
  } else {
    require(embedding_dim == 0, "embedding_dim only applies to two_level_embedding");
  }
  if (op == OperatorKind::tag || op == OperatorKind::cheb) {
    require(K >= 0 && K <= 16, "K must lie in [0, 16]");
  } else {
    require(K == 0, "K only applies to tag and cheb");
  }
  require(output_size >= 2, "output_size must be at least 2");
  require(batch_size >= 1, "batch_size must be positive");

  const auto& o = optimizer;
  require(o.learning_rate > 0.0 && std::isfinite(o.learning_rate), "optimizer.learning_rate must be positive");
  require(o.weight_decay >= 0.0, "optimizer.weight_decay must be nonnegative");
  require(o.l1_lambda >= 0.0, "optimizer.l1_lambda must be nonnegative");
  require(o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 >= 0.0 && o.beta2 < 1.0,
          "optimizer betas must lie in [0, 1)");
  require(o.momentum >= 0.0 && o.momentum < 1.0, "optimizer.momentum must lie in [0, 1)");
  require(o.alpha > 0.0 && o.alpha < 1.0, "optimizer.alpha must lie in (0, 1)");
  require(o.eps > 0.0, "optimizer.eps must be positive");

  const auto& s = scheduler;
  switch (s.kind) {
    case SchedulerKind::constant: break;
    case SchedulerKind::step:
      require(s.step_size >= 1 && s.gamma > 0.0 && s.gamma <= 1.0, "step scheduler needs size >= 1, gamma in (0, 1]");
      break;
    case SchedulerKind::exponential:
      require(s.gamma > 0.0 && s.gamma <= 1.0, "exponential scheduler needs gamma in (0, 1]");
      break;
    case SchedulerKind::reduce_on_plateau:
      require(s.factor > 0.0 && s.factor < 1.0 && s.patience >= 0 && s.threshold >= 0.0 && s.plateau_eps >= 0.0,
              "plateau scheduler fields out of domain");
      break;
    case SchedulerKind::polynomial:
      require(s.power > 0.0 && s.total_iters >= 1, "polynomial scheduler needs power > 0, total_iters >= 1");
      break;
    case SchedulerKind::cosine_annealing:
      require(s.t_max >= 1 && s.eta_min >= 0.0, "cosine scheduler needs T_max >= 1, eta_min >= 0");
      break;
    case SchedulerKind::cyclic:
      require(s.base_lr > 0.0 && s.base_lr < s.max_lr && s.step_size_up >= 1,
              "cyclic scheduler needs 0 < base_lr < max_lr and step_size_up >= 1");
      break;
    case SchedulerKind::one_cycle:
      require(s.max_lr > 0.0 && s.pct_start > 0.0 && s.pct_start < 1.0 && s.total_steps >= 0,
              "one_cycle scheduler needs max_lr > 0 and pct_start in (0, 1)");
      break;
  }
}

std::vector<std::string> range_violations(const ModelConfig& c) {
  std::vector<std::string> out;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) out.push_back(what);
  };
  auto in = [](double x, double lo, double hi) { return x >= lo && x <= hi; };
  auto stack = [&](const std::vector<LayerSpec>& layers, const std::string& name, std::size_t lo,
                   std::size_t hi) {
    check(layers.size() >= lo && layers.size() <= hi, name + " count");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const std::string where = name + "[" + std::to_string(i) + "]";
      check(in(l.units, 16, 512), where + ".units");
      if (l.dropout) check(in(*l.dropout, 0.2, 0.7), where + ".dropout");
      if (l.batch_norm) {
        check(in(l.batch_norm->momentum, 0.1, 0.999), where + ".batch_norm.momentum");
        check(in(l.batch_norm->eps, 1e-5, 1e-2), where + ".batch_norm.eps");
      }
    }
  };
  stack(c.gnn_layers, "gnn_layers", 1, 5);
  stack(c.final_dense_layers, "final_dense_layers", 1, 3);
  if (is_two_level(c.architecture)) stack(c.sequence_dense_layers, "sequence_dense_layers", 1, 3);
  if (!c.aux_gnn_layers.empty()) stack(c.aux_gnn_layers, "aux_gnn_layers", 1, 5);
  if (!c.concat_gnn_layers.empty()) stack(c.concat_gnn_layers, "concat_gnn_layers", 1, 5);
  if (c.architecture == Architecture::two_level_embedding) check(in(c.embedding_dim, 10, 50), "embedding_dim");
  if (c.op == OperatorKind::tag || c.op == OperatorKind::cheb) check(in(c.K, 1, 4), "K");
  const int sizes[] = {16, 32, 64, 128, 512};
  check(std::find(std::begin(sizes), std::end(sizes), c.batch_size) != std::end(sizes), "batch_size");

  const auto& o = c.optimizer;
  check(in(o.learning_rate, 1e-5, 1e-2), "optimizer.learning_rate");
  check(in(o.weight_decay, 0.0, 1e-3), "optimizer.weight_decay");
  check(in(o.l1_lambda, 0.0, 1e-3), "optimizer.l1_lambda");
  switch (o.kind) {
    case OptimizerKind::adam:
      check(in(o.beta1, 0.85, 0.99), "optimizer.beta1");
      check(in(o.beta2, 0.99, 0.999), "optimizer.beta2");
      break;
    case OptimizerKind::sgd: check(in(o.momentum, 0.0, 0.9), "optimizer.momentum"); break;
    case OptimizerKind::rmsprop:
      check(in(o.alpha, 0.9, 0.999), "optimizer.alpha");
      check(in(o.momentum, 0.0, 0.9), "optimizer.momentum");
      check(in(o.eps, 1e-9, 1e-7), "optimizer.eps");
      break;
  }
  const auto& s = c.scheduler;
  switch (s.kind) {
    case SchedulerKind::constant: check(false, "scheduler.kind"); break;
    case SchedulerKind::step:
      check(in(s.step_size, 1, 50), "scheduler.step_size");
      check(in(s.gamma, 0.1, 0.9), "scheduler.gamma");
      break;
    case SchedulerKind::exponential: check(in(s.gamma, 0.85, 0.99), "scheduler.gamma"); break;
    case SchedulerKind::reduce_on_plateau:
      check(in(s.factor, 0.1, 0.9), "scheduler.factor");
      check(in(s.patience, 1, 50), "scheduler.patience");
      check(in(s.threshold, 1e-4, 1e-2), "scheduler.threshold");
      check(in(s.plateau_eps, 1e-8, 1e-4), "scheduler.eps");
      break;
    case SchedulerKind::polynomial:
      check(in(s.power, 0.1, 2.0), "scheduler.power");
      check(in(s.total_iters, 2, 300), "scheduler.total_iters");
      break;
    case SchedulerKind::cosine_annealing:
      check(in(s.t_max, 10, 100), "scheduler.t_max");
      check(in(s.eta_min, 1e-6, 1e-2), "scheduler.eta_min");
      break;
    case SchedulerKind::cyclic:
      check(in(s.base_lr, 1e-5, 1e-2), "scheduler.base_lr");
      check(in(s.max_lr, 1e-3, 1e-1), "scheduler.max_lr");
      check(s.base_lr < s.max_lr, "scheduler.base_lr < max_lr");
      check(in(s.step_size_up, 5, 200), "scheduler.step_size_up");
      break;
    case SchedulerKind::one_cycle:
      check(in(s.max_lr, 1e-3, 1e-1), "scheduler.max_lr");
      check(in(s.pct_start, 0.1, 0.5), "scheduler.pct_start");
      break;
  }
  return out;
}

// ---- JSON -------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError(where + ": unexpected field '" + key + "'");
  }
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

json stack_to_json(const std::vector<LayerSpec>& layers) {
  json a = json::array();
  for (const auto& l : layers) a.push_back(l);
  return a;
}

std::vector<LayerSpec> stack_from_json(const json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(std::string("config: '") + key + "' must be an array");
  std::vector<LayerSpec> out;
  for (const auto& l : j) out.push_back(l.get<LayerSpec>());
  return out;
}

}  // namespace

void to_json(json& j, const LayerSpec& l) {
  j = {{"units", l.units}, {"activation", to_string(l.activation)}};
  if (l.dropout) j["dropout"] = *l.dropout;
  if (l.batch_norm) j["batch_norm"] = {{"momentum", l.batch_norm->momentum}, {"eps", l.batch_norm->eps}};
  if (l.skip) j["skip"] = true;
}

void from_json(const json& j, LayerSpec& l) {
  const std::string where = "layer";
  check_keys(j, {"units", "activation", "dropout", "batch_norm", "skip"}, where);
  l = LayerSpec{};
  l.units = field<int>(j, "units", where);
  try {
    l.activation = activation_from_string(field<std::string>(j, "activation", where));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("layer: ") + e.what());
  }
  if (j.contains("dropout")) l.dropout = field<double>(j, "dropout", where);
  if (j.contains("batch_norm")) {
    const auto& bn = j.at("batch_norm");
    check_keys(bn, {"momentum", "eps"}, "batch_norm");
    l.batch_norm = BatchNormSpec{field<double>(bn, "momentum", "batch_norm"), field<double>(bn, "eps", "batch_norm")};
  }
  if (j.contains("skip")) l.skip = field<bool>(j, "skip", where);
}

void to_json(json& j, const OptimizerConfig& o) {
  j = {{"kind", to_string(o.kind)},
       {"learning_rate", o.learning_rate},
       {"weight_decay", o.weight_decay},
       {"l1_lambda", o.l1_lambda}};
  switch (o.kind) {
    case OptimizerKind::adam:
      j["beta1"] = o.beta1;
      j["beta2"] = o.beta2;
      break;
    case OptimizerKind::sgd: j["momentum"] = o.momentum; break;
    case OptimizerKind::rmsprop:
      j["alpha"] = o.alpha;
      j["momentum"] = o.momentum;
      j["eps"] = o.eps;
      break;
  }
}

void from_json(const json& j, OptimizerConfig& o) {
  const std::string where = "optimizer";
  o = OptimizerConfig{};
  o.kind = optimizer_from_string(field<std::string>(j, "kind", where));
  std::set<std::string> keys = {"kind", "learning_rate", "weight_decay", "l1_lambda"};
  switch (o.kind) {
    case OptimizerKind::adam: keys.insert({"beta1", "beta2"}); break;
    case OptimizerKind::sgd: keys.insert("momentum"); break;
    case OptimizerKind::rmsprop: keys.insert({"alpha", "momentum", "eps"}); break;
  }
  check_keys(j, keys, where);
  o.learning_rate = field<double>(j, "learning_rate", where);
  if (j.contains("weight_decay")) o.weight_decay = field<double>(j, "weight_decay", where);
  if (j.contains("l1_lambda")) o.l1_lambda = field<double>(j, "l1_lambda", where);
  if (j.contains("beta1")) o.beta1 = field<double>(j, "beta1", where);
  if (j.contains("beta2")) o.beta2 = field<double>(j, "beta2", where);
  if (j.contains("momentum")) o.momentum = field<double>(j, "momentum", where);
  if (j.contains("alpha")) o.alpha = field<double>(j, "alpha", where);
  if (j.contains("eps")) o.eps = field<double>(j, "eps", where);
}

void to_json(json& j, const SchedulerConfig& s) {
  j = {{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case SchedulerKind::constant: break;
    case SchedulerKind::step:
      j["step_size"] = s.step_size;
      j["gamma"] = s.gamma;
      break;
    case SchedulerKind::exponential: j["gamma"] = s.gamma; break;
    case SchedulerKind::reduce_on_plateau:
      j["factor"] = s.factor;
      j["patience"] = s.patience;
      j["threshold"] = s.threshold;
      j["eps"] = s.plateau_eps;
      break;
    case SchedulerKind::polynomial:
      j["power"] = s.power;
      j["total_iters"] = s.total_iters;
      break;
    case SchedulerKind::cosine_annealing:
      j["t_max"] = s.t_max;
      j["eta_min"] = s.eta_min;
      break;
    case SchedulerKind::cyclic:
      j["base_lr"] = s.base_lr;
      j["max_lr"] = s.max_lr;
      j["step_size_up"] = s.step_size_up;
      break;
    case SchedulerKind::one_cycle:
      j["max_lr"] = s.max_lr;
      j["pct_start"] = s.pct_start;
      if (s.total_steps > 0) j["total_steps"] = s.total_steps;
      break;
  }
}

void from_json(const json& j, SchedulerConfig& s) {
  const std::string where = "scheduler";
  s = SchedulerConfig{};
  s.kind = scheduler_from_string(field<std::string>(j, "kind", where));
  std::set<std::string> keys = {"kind"};
  switch (s.kind) {
    case SchedulerKind::constant: break;
    case SchedulerKind::step: keys.insert({"step_size", "gamma"}); break;
    case SchedulerKind::exponential: keys.insert("gamma"); break;
    case SchedulerKind::reduce_on_plateau: keys.insert({"factor", "patience", "threshold", "eps"}); break;
    case SchedulerKind::polynomial: keys.insert({"power", "total_iters"}); break;
    case SchedulerKind::cosine_annealing: keys.insert({"t_max", "eta_min"}); break;
    case SchedulerKind::cyclic: keys.insert({"base_lr", "max_lr", "step_size_up"}); break;
    case SchedulerKind::one_cycle: keys.insert({"max_lr", "pct_start", "total_steps"}); break;
  }
  check_keys(j, keys, where);
  auto opt = [&](const char* key, auto& target) {
    if (j.contains(key)) target = field<std::decay_t<decltype(target)>>(j, key, where);
  };
  opt("step_size", s.step_size);
  opt("gamma", s.gamma);
  opt("factor", s.factor);
  opt("patience", s.patience);
  opt("threshold", s.threshold);
  opt("eps", s.plateau_eps);
  opt("power", s.power);
  opt("total_iters", s.total_iters);
  opt("t_max", s.t_max);
  opt("eta_min", s.eta_min);
  opt("base_lr", s.base_lr);
  opt("max_lr", s.max_lr);
  opt("step_size_up", s.step_size_up);
  opt("pct_start", s.pct_start);
  opt("total_steps", s.total_steps);
}

void to_json(json& j, const ModelConfig& c) {
  j = json::object();
  j["architecture"] = to_string(c.architecture);
  j["operator"] = to_string(c.op);
  j["gnn_layers"] = stack_to_json(c.gnn_layers);
  if (c.architecture == Architecture::two_level_pseudo) {
    j["pseudo_gnn_layers"] = stack_to_json(c.aux_gnn_layers);
    j["concat_gnn_layers"] = stack_to_json(c.concat_gnn_layers);
  }
  if (c.architecture == Architecture::two_level_embedding) {
    j["embedding_gnn_layers"] = stack_to_json(c.aux_gnn_layers);
    j["embedding_dim"] = c.embedding_dim;
    j["keep_activity_onehot"] = c.keep_activity_onehot;
  }
  if (is_two_level(c.architecture)) j["sequence_dense_layers"] = stack_to_json(c.sequence_dense_layers);
  j["final_dense_layers"] = stack_to_json(c.final_dense_layers);
  j["pooling"] = to_string(c.pooling);
  if (c.op == OperatorKind::graph) j["graph_aggregation"] = to_string(c.graph_aggregation);
  if (c.op == OperatorKind::tag || c.op == OperatorKind::cheb) j["K"] = c.K;
  j["output_size"] = c.output_size;
  j["optimizer"] = c.optimizer;
  j["scheduler"] = c.scheduler;
  j["loss"] = to_string(c.loss);
  j["batch_size"] = c.batch_size;
}

void from_json(const json& j, ModelConfig& c) {
  const std::string where = "config";
  c = ModelConfig{};
  c.architecture = architecture_from_string(field<std::string>(j, "architecture", where));
  try {
    c.op = operator_from_string(field<std::string>(j, "operator", where));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::set<std::string> keys = {"architecture", "operator", "gnn_layers", "final_dense_layers",
                                "pooling", "output_size", "optimizer", "scheduler", "loss",
                                "batch_size"};
  if (c.architecture == Architecture::two_level_pseudo) keys.insert({"pseudo_gnn_layers", "concat_gnn_layers"});
  if (c.architecture == Architecture::two_level_embedding) {
    keys.insert({"embedding_gnn_layers", "embedding_dim", "keep_activity_onehot"});
  }
  if (is_two_level(c.architecture)) keys.insert("sequence_dense_layers");
  if (c.op == OperatorKind::graph) keys.insert("graph_aggregation");
  if (c.op == OperatorKind::tag || c.op == OperatorKind::cheb) keys.insert("K");
  check_keys(j, keys, where);

  auto stack = [&](const char* key) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    return stack_from_json(j.at(key), key);
  };
  c.gnn_layers = stack("gnn_layers");
  c.final_dense_layers = stack("final_dense_layers");
  if (c.architecture == Architecture::two_level_pseudo) {
    c.aux_gnn_layers = stack("pseudo_gnn_layers");
    c.concat_gnn_layers = stack("concat_gnn_layers");
  }
  if (c.architecture == Architecture::two_level_embedding) {
    c.aux_gnn_layers = stack("embedding_gnn_layers");
    c.embedding_dim = field<int>(j, "embedding_dim", where);
    if (j.contains("keep_activity_onehot")) c.keep_activity_onehot = field<bool>(j, "keep_activity_onehot", where);
  }
  if (is_two_level(c.architecture)) c.sequence_dense_layers = stack("sequence_dense_layers");
  try {
    c.pooling = reduce_mode_from_string(field<std::string>(j, "pooling", where));
    if (c.op == OperatorKind::graph) {
      c.graph_aggregation = aggregation_from_string(field<std::string>(j, "graph_aggregation", where));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.op == OperatorKind::tag || c.op == OperatorKind::cheb) c.K = field<int>(j, "K", where);
  c.output_size = field<int>(j, "output_size", where);
  c.optimizer = field<OptimizerConfig>(j, "optimizer", where);
  c.scheduler = field<SchedulerConfig>(j, "scheduler", where);
  c.loss = loss_from_string(field<std::string>(j, "loss", where));
  c.batch_size = field<int>(j, "batch_size", where);
  c.validate();
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return j.get<ModelConfig>();
}

void save_model_config(const ModelConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config '" + path + "'");
  out << json(c).dump(2) << '\n';
}

// ---- text dump --------------------------------------------------------------

std::string operator_display_name(OperatorKind op) {
  switch (op) {
    case OperatorKind::gcn: return "GCN";
    case OperatorKind::graph: return "GraphConv";
    case OperatorKind::sage: return "SAGE";
    case OperatorKind::tag: return "TAG";
    case OperatorKind::cheb: return "Cheb";
    case OperatorKind::gin: return "GIN";
  }
  return "?";
}

std::string scheduler_display_name(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::constant: return "Constant";
    case SchedulerKind::step: return "StepLR";
    case SchedulerKind::exponential: return "ExponentialLR";
    case SchedulerKind::reduce_on_plateau: return "ReduceLROnPlateau";
    case SchedulerKind::polynomial: return "PolynomialLR";
    case SchedulerKind::cosine_annealing: return "CosineAnnealingLR";
    case SchedulerKind::cyclic: return "CyclicLR";
    case SchedulerKind::one_cycle: return "OneCycleLR";
  }
  return "?";
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sci4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

// Stacks listed right under an "Input Size" line carry a leading space.
void dump_stack(std::ostream& out, const std::vector<LayerSpec>& layers, const std::string& title,
                bool after_input = true) {
  out << (after_input ? " " : "") << "Number of " << title << " layers: " << layers.size() << '\n';
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    out << "   " << title << " Layer " << i + 1 << ":\n";
    out << "    Units: " << l.units << '\n';
    if (l.skip) out << "    Skip Connections: True\n";
    if (l.batch_norm) {
      out << "    Batch Norm Momentum: " << fixed4(l.batch_norm->momentum) << '\n';
      out << "    Batch Norm Epsilon: " << sci4(l.batch_norm->eps) << '\n';
    }
    out << "    Activation: " << to_string(l.activation) << '\n';
    if (l.dropout) out << "    Dropout: " << fixed4(*l.dropout) << '\n';
  }
}

}  // namespace

std::string format_best_config(const ModelConfig& c, const InputDims& dims,
                               const std::optional<DumpSummary>& summary) {
  std::ostringstream out;
  const std::string op = operator_display_name(c.op);
  out << "Best hyperparameters found were:\n";
  out << "Architecture: " << to_string(c.architecture) << '\n';
  int event_input = dims.node_features;
  if (c.architecture == Architecture::one_level) event_input += dims.graph_features;
  if (c.architecture == Architecture::two_level_embedding && !c.keep_activity_onehot) {
    event_input -= dims.n_activities;
  }
  out << "Event Input Size: " << event_input << '\n';
  if (c.op == OperatorKind::graph) out << " GraphConv Aggregation: " << to_string(c.graph_aggregation) << '\n';
  if (c.op == OperatorKind::tag || c.op == OperatorKind::cheb) out << " Filter Order K: " << c.K << '\n';
  dump_stack(out, c.gnn_layers, op);
  out << " \n";
  if (c.architecture == Architecture::two_level_pseudo) {
    out << "Duration Embedding Input Size: " << dims.n_bins << '\n';
    dump_stack(out, c.aux_gnn_layers, "Duration Embedding " + op);
    out << " \n";
    dump_stack(out, c.concat_gnn_layers, "Concatenated " + op, false);
    out << " \n";
  }
  if (c.architecture == Architecture::two_level_embedding) {
    out << "Activity Embedding Dim: " << c.embedding_dim << '\n';
    out << "Activity Embedding Input Size: " << c.embedding_dim << '\n';
    dump_stack(out, c.aux_gnn_layers, "Activity Embedding " + op);
    out << " \n";
  }
  out << "Pooling Method: " << to_string(c.pooling) << "\n\n";
  if (is_two_level(c.architecture)) {
    out << "Sequence Input Size: " << dims.graph_features << '\n';
    dump_stack(out, c.sequence_dense_layers, "Sequence Dense");
    out << " \n";
  }
  dump_stack(out, c.final_dense_layers, "Dense", false);
  out << " \n";

  const auto& o = c.optimizer;
  const std::string oname = o.kind == OptimizerKind::adam ? "Adam" : o.kind == OptimizerKind::sgd ? "SGD" : "RMSprop";
  out << "Optimizer: " << oname << '\n';
  out << "  Learning Rate (" << oname << "): " << sci4(o.learning_rate) << '\n';
  out << "  Weight Decay (" << oname << "): " << sci4(o.weight_decay) << '\n';
  switch (o.kind) {
    case OptimizerKind::adam:
      out << "  Beta1 (Adam): " << fixed4(o.beta1) << '\n';
      out << "  Beta2 (Adam): " << fixed4(o.beta2) << '\n';
      break;
    case OptimizerKind::sgd: out << "  Momentum (SGD): " << fixed4(o.momentum) << '\n'; break;
    case OptimizerKind::rmsprop:
      out << "  Momentum (RMSprop): " << fixed4(o.momentum) << '\n';
      out << "  Alpha (RMSprop): " << fixed4(o.alpha) << '\n';
      out << "  Eps (RMSprop): " << sci4(o.eps) << '\n';
      break;
  }
  out << "  \n";

  const auto& s = c.scheduler;
  out << "Learning Rate Schedule: " << scheduler_display_name(s.kind) << '\n';
  switch (s.kind) {
    case SchedulerKind::constant: break;
    case SchedulerKind::step:
      out << "  Step_size: " << s.step_size << '\n';
      out << "  Gamma: " << fixed4(s.gamma) << '\n';
      break;
    case SchedulerKind::exponential: out << "  Gamma: " << fixed4(s.gamma) << '\n'; break;
    case SchedulerKind::reduce_on_plateau:
      out << "  Factor: " << fixed4(s.factor) << '\n';
      out << "  Patience: " << s.patience << '\n';
      out << "  Threshold: " << sci4(s.threshold) << '\n';
      out << "  Eps: " << sci4(s.plateau_eps) << '\n';
      break;
    case SchedulerKind::polynomial:
      out << "  Power: " << fixed4(s.power) << '\n';
      out << "  Total_iters: " << s.total_iters << '\n';
      break;
    case SchedulerKind::cosine_annealing:
      out << "  T_max: " << s.t_max << '\n';
      out << "  Eta_min: " << sci4(s.eta_min) << '\n';
      break;
    case SchedulerKind::cyclic:
      out << "  Base_lr: " << sci4(s.base_lr) << '\n';
      out << "  Max_lr: " << sci4(s.max_lr) << '\n';
      out << "  Step_size_up: " << s.step_size_up << '\n';
      break;
    case SchedulerKind::one_cycle:
      out << "  Max_lr: " << sci4(s.max_lr) << '\n';
      out << "  Total_steps: " << (s.total_steps > 0 ? s.total_steps : 1000LL * c.batch_size) << '\n';
      out << "  Pct_start: " << fixed4(s.pct_start) << '\n';
      break;
  }
  out << '\n';
  out << "Loss function: " << (c.loss == LossKind::cross_entropy ? "CrossEntropyLoss()" : "MultiMarginLoss()")
      << '\n';
  out << "l1 lambda: " << sci4(o.l1_lambda) << '\n';
  out << '\n';
  out << "Output Size: " << c.output_size << '\n';
  out << "Best batch size: " << c.batch_size << '\n';
  if (summary) {
    out << "Best epoch: " << summary->best_epoch << '\n';
    out << "Best accuracy: " << fixed4(summary->accuracy) << '\n';
    out << "Best loss: " << fixed4(summary->loss) << '\n';
    out << "Best loss std: " << fixed4(summary->loss_std) << '\n';
  }
  return out.str();
}

}  // namespace hgnn
