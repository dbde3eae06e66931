#include "hgnn/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hgnn {

std::string to_string(ParamKind k) {
  switch (k) {
    case ParamKind::float_linear: return "float_linear";
    case ParamKind::float_log: return "float_log";
    case ParamKind::integer: return "int";
    case ParamKind::categorical: return "categorical";
  }
  return "?";
}

double number(const Assignment& a, const std::string& name) {
  const auto it = a.find(name);
  if (it == a.end()) throw ConfigError("assignment: missing '" + name + "'");
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  throw ConfigError("assignment: '" + name + "' is not numeric");
}

const std::string& choice(const Assignment& a, const std::string& name) {
  const auto it = a.find(name);
  if (it == a.end()) throw ConfigError("assignment: missing '" + name + "'");
  if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
  throw ConfigError("assignment: '" + name + "' is not categorical");
}

bool has(const Assignment& a, const std::string& name) { return a.count(name) > 0; }

bool ParamSpec::admits(const ParamValue& v) const {
  if (kind == ParamKind::categorical) {
    const auto* s = std::get_if<std::string>(&v);
    return s && std::find(choices.begin(), choices.end(), *s) != choices.end();
  }
  const auto* d = std::get_if<double>(&v);
  if (!d || !std::isfinite(*d) || *d < low || *d > high) return false;
  return kind != ParamKind::integer || *d == std::round(*d);
}

ParamValue ParamSpec::sample_uniform(std::mt19937_64& rng) const {
  switch (kind) {
    case ParamKind::categorical: {
      std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
      return choices[pick(rng)];
    }
    case ParamKind::integer: {
      std::uniform_int_distribution<long long> pick(static_cast<long long>(low), static_cast<long long>(high));
      return static_cast<double>(pick(rng));
    }
    case ParamKind::float_log: {
      std::uniform_real_distribution<double> u(std::log(low), std::log(high));
      return std::clamp(std::exp(u(rng)), low, high);
    }
    case ParamKind::float_linear: {
      std::uniform_real_distribution<double> u(low, high);
      return u(rng);
    }
  }
  return 0.0;
}

namespace {

const std::vector<std::string> kBool = {"false", "true"};

std::vector<std::string> activation_names() {
  std::vector<std::string> out;
  for (auto a : kSearchActivations) out.push_back(to_string(a));
  return out;
}

class Builder {
 public:
  SearchSpace space;

  ParamSpec& add(std::string name, ParamKind kind, double low, double high) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = kind;
    p.low = low;
    p.high = high;
    space.push_back(std::move(p));
    return space.back();
  }

  ParamSpec& add_choice(std::string name, std::vector<std::string> choices) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ParamKind::categorical;
    p.choices = std::move(choices);
    space.push_back(std::move(p));
    return space.back();
  }

  static void when_at_least(ParamSpec& p, const std::string& count, int i) {
    p.depends_on = {count};
    p.condition = [count, i](const Assignment& a) { return has(a, count) && number(a, count) >= i; };
    p.condition_text = count + " >= " + std::to_string(i);
  }

  static void when_equal(ParamSpec& p, const std::string& name, const std::string& value) {
    p.depends_on = {name};
    p.condition = [name, value](const Assignment& a) { return has(a, name) && choice(a, name) == value; };
    p.condition_text = name + " == " + value;
  }

  void stack(const std::string& prefix, int max_layers, bool skip) {
    const std::string count = "n_" + prefix + "_layers";
    add(count, ParamKind::integer, 1, max_layers);
    for (int i = 1; i <= max_layers; ++i) {
      const std::string p = prefix + "_" + std::to_string(i) + "_";
      when_at_least(add(p + "units", ParamKind::integer, 16, 512), count, i);
      when_at_least(add_choice(p + "activation", activation_names()), count, i);
      when_at_least(add_choice(p + "dropout", kBool), count, i);
      when_equal(add(p + "dropout_rate", ParamKind::float_linear, 0.2, 0.7), p + "dropout", "true");
      when_at_least(add_choice(p + "batch_norm", kBool), count, i);
      when_equal(add(p + "bn_momentum", ParamKind::float_linear, 0.1, 0.999), p + "batch_norm", "true");
      when_equal(add(p + "bn_eps", ParamKind::float_log, 1e-5, 1e-2), p + "batch_norm", "true");
      if (skip) when_at_least(add_choice(p + "skip", kBool), count, i);
    }
  }
};

}  // namespace

SearchSpace build_search_space(Architecture arch, OperatorKind op) {
  Builder b;
  b.stack("gnn", 5, true);
  if (op == OperatorKind::graph) b.add_choice("graph_aggregation", {"add", "mean", "max"});
  if (op == OperatorKind::tag || op == OperatorKind::cheb) b.add("K", ParamKind::integer, 1, 4);
  if (arch == Architecture::two_level_pseudo) {
    b.stack("pseudo", 5, true);
    b.stack("concat", 5, true);
  }
  if (arch == Architecture::two_level_embedding) {
    b.add("embedding_dim", ParamKind::integer, 10, 50);
    b.stack("embedding", 5, true);
  }
  b.add_choice("pooling", {"mean", "add", "max"});
  if (is_two_level(arch)) b.stack("sequence", 3, false);
  b.stack("dense", 3, false);

  b.add_choice("optimizer", {"adam", "sgd", "rmsprop"});
  b.add("learning_rate", ParamKind::float_log, 1e-5, 1e-2);
  b.add("weight_decay", ParamKind::float_linear, 0.0, 1e-3);
  b.add("l1_lambda", ParamKind::float_linear, 0.0, 1e-3);
  Builder::when_equal(b.add("adam_beta1", ParamKind::float_linear, 0.85, 0.99), "optimizer", "adam");
  Builder::when_equal(b.add("adam_beta2", ParamKind::float_linear, 0.99, 0.999), "optimizer", "adam");
  Builder::when_equal(b.add("sgd_momentum", ParamKind::float_linear, 0.0, 0.9), "optimizer", "sgd");
  Builder::when_equal(b.add("rmsprop_alpha", ParamKind::float_linear, 0.9, 0.999), "optimizer", "rmsprop");
  Builder::when_equal(b.add("rmsprop_momentum", ParamKind::float_linear, 0.0, 0.9), "optimizer", "rmsprop");
  Builder::when_equal(b.add("rmsprop_eps", ParamKind::float_log, 1e-9, 1e-7), "optimizer", "rmsprop");

  b.add_choice("scheduler", {"step", "exponential", "reduce_on_plateau", "polynomial", "cosine_annealing",
                             "cyclic", "one_cycle"});
  Builder::when_equal(b.add("step_size", ParamKind::integer, 1, 50), "scheduler", "step");
  Builder::when_equal(b.add("step_gamma", ParamKind::float_linear, 0.1, 0.9), "scheduler", "step");
  Builder::when_equal(b.add("exponential_gamma", ParamKind::float_linear, 0.85, 0.99), "scheduler", "exponential");
  Builder::when_equal(b.add("plateau_factor", ParamKind::float_linear, 0.1, 0.9), "scheduler", "reduce_on_plateau");
  Builder::when_equal(b.add("plateau_patience", ParamKind::integer, 1, 50), "scheduler", "reduce_on_plateau");
  Builder::when_equal(b.add("plateau_threshold", ParamKind::float_log, 1e-4, 1e-2), "scheduler", "reduce_on_plateau");
  Builder::when_equal(b.add("plateau_eps", ParamKind::float_log, 1e-8, 1e-4), "scheduler", "reduce_on_plateau");
  Builder::when_equal(b.add("polynomial_power", ParamKind::float_linear, 0.1, 2.0), "scheduler", "polynomial");
  Builder::when_equal(b.add("polynomial_total_iters", ParamKind::integer, 2, 300), "scheduler", "polynomial");
  Builder::when_equal(b.add("cosine_t_max", ParamKind::integer, 10, 100), "scheduler", "cosine_annealing");
  Builder::when_equal(b.add("cosine_eta_min", ParamKind::float_log, 1e-6, 1e-2), "scheduler", "cosine_annealing");
  Builder::when_equal(b.add("cyclic_base_lr", ParamKind::float_log, 1e-5, 1e-2), "scheduler", "cyclic");
  Builder::when_equal(b.add("cyclic_max_lr", ParamKind::float_log, 1e-3, 1e-1), "scheduler", "cyclic");
  Builder::when_equal(b.add("cyclic_step_size_up", ParamKind::integer, 5, 200), "scheduler", "cyclic");
  Builder::when_equal(b.add("one_cycle_max_lr", ParamKind::float_log, 1e-3, 1e-1), "scheduler", "one_cycle");
  Builder::when_equal(b.add("one_cycle_pct_start", ParamKind::float_linear, 0.1, 0.5), "scheduler", "one_cycle");

  b.add_choice("loss", {"cross_entropy", "multi_margin"});
  b.add_choice("batch_size", {"16", "32", "64", "128", "512"});
  return b.space;
}

Assignment sample_uniform(const SearchSpace& space, std::mt19937_64& rng) {
  Assignment a;
  for (const auto& p : space) {
    if (p.active(a)) a[p.name] = p.sample_uniform(rng);
  }
  return a;
}

std::vector<std::string> check_assignment(const SearchSpace& space, const Assignment& a) {
  std::vector<std::string> out;
  Assignment partial;
  for (const auto& p : space) {
    const bool active = p.active(partial);
    const auto it = a.find(p.name);
    if (active && it == a.end()) out.push_back(p.name + ": missing although " + p.condition_text);
    if (!active && it != a.end()) out.push_back(p.name + ": present although condition '" + p.condition_text + "' is false");
    if (it != a.end()) {
      if (!p.admits(it->second)) out.push_back(p.name + ": value outside its bounds or choices");
      partial[p.name] = it->second;
    }
  }
  for (const auto& [name, value] : a) {
    (void)value;
    if (std::none_of(space.begin(), space.end(), [&](const ParamSpec& p) { return p.name == name; })) {
      out.push_back(name + ": not part of the space");
    }
  }
  return out;
}

namespace {

std::vector<LayerSpec> stack_from(const Assignment& a, const std::string& prefix) {
  const int n = static_cast<int>(number(a, "n_" + prefix + "_layers"));
  std::vector<LayerSpec> out;
  for (int i = 1; i <= n; ++i) {
    const std::string p = prefix + "_" + std::to_string(i) + "_";
    LayerSpec l;
    l.units = static_cast<int>(number(a, p + "units"));
    l.activation = activation_from_string(choice(a, p + "activation"));
    if (choice(a, p + "dropout") == "true") l.dropout = number(a, p + "dropout_rate");
    if (choice(a, p + "batch_norm") == "true") {
      l.batch_norm = BatchNormSpec{number(a, p + "bn_momentum"), number(a, p + "bn_eps")};
    }
    if (has(a, p + "skip")) l.skip = choice(a, p + "skip") == "true";
    out.push_back(l);
  }
  return out;
}

}  // namespace

ModelConfig config_from_assignment(Architecture arch, OperatorKind op, const Assignment& a, int output_size) {
  ModelConfig c;
  c.architecture = arch;
  c.op = op;
  c.output_size = output_size;
  c.gnn_layers = stack_from(a, "gnn");
  if (op == OperatorKind::graph) c.graph_aggregation = aggregation_from_string(choice(a, "graph_aggregation"));
  if (op == OperatorKind::tag || op == OperatorKind::cheb) c.K = static_cast<int>(number(a, "K"));
  if (arch == Architecture::two_level_pseudo) {
    c.aux_gnn_layers = stack_from(a, "pseudo");
    c.concat_gnn_layers = stack_from(a, "concat");
  }
  if (arch == Architecture::two_level_embedding) {
    c.embedding_dim = static_cast<int>(number(a, "embedding_dim"));
    c.aux_gnn_layers = stack_from(a, "embedding");
  }
  c.pooling = reduce_mode_from_string(choice(a, "pooling"));
  if (is_two_level(arch)) c.sequence_dense_layers = stack_from(a, "sequence");
  c.final_dense_layers = stack_from(a, "dense");

  auto& o = c.optimizer;
  o.kind = optimizer_from_string(choice(a, "optimizer"));
  o.learning_rate = number(a, "learning_rate");
  o.weight_decay = number(a, "weight_decay");
  o.l1_lambda = number(a, "l1_lambda");
  switch (o.kind) {
    case OptimizerKind::adam:
      o.beta1 = number(a, "adam_beta1");
      o.beta2 = number(a, "adam_beta2");
      break;
    case OptimizerKind::sgd: o.momentum = number(a, "sgd_momentum"); break;
    case OptimizerKind::rmsprop:
      o.alpha = number(a, "rmsprop_alpha");
      o.momentum = number(a, "rmsprop_momentum");
      o.eps = number(a, "rmsprop_eps");
      break;
  }

  auto& s = c.scheduler;
  s.kind = scheduler_from_string(choice(a, "scheduler"));
  switch (s.kind) {
    case SchedulerKind::constant: break;
    case SchedulerKind::step:
      s.step_size = static_cast<int>(number(a, "step_size"));
      s.gamma = number(a, "step_gamma");
      break;
    case SchedulerKind::exponential: s.gamma = number(a, "exponential_gamma"); break;
    case SchedulerKind::reduce_on_plateau:
      s.factor = number(a, "plateau_factor");
      s.patience = static_cast<int>(number(a, "plateau_patience"));
      s.threshold = number(a, "plateau_threshold");
      s.plateau_eps = number(a, "plateau_eps");
      break;
    case SchedulerKind::polynomial:
      s.power = number(a, "polynomial_power");
      s.total_iters = static_cast<int>(number(a, "polynomial_total_iters"));
      break;
    case SchedulerKind::cosine_annealing:
      s.t_max = static_cast<int>(number(a, "cosine_t_max"));
      s.eta_min = number(a, "cosine_eta_min");
      break;
    case SchedulerKind::cyclic:
      s.base_lr = number(a, "cyclic_base_lr");
      s.max_lr = number(a, "cyclic_max_lr");
      if (s.base_lr >= s.max_lr) std::swap(s.base_lr, s.max_lr);
      s.step_size_up = static_cast<int>(number(a, "cyclic_step_size_up"));
      break;
    case SchedulerKind::one_cycle:
      s.max_lr = number(a, "one_cycle_max_lr");
      s.pct_start = number(a, "one_cycle_pct_start");
      break;
  }
  c.loss = loss_from_string(choice(a, "loss"));
  c.batch_size = std::stoi(choice(a, "batch_size"));
  c.validate();
  return c;
}

nlohmann::json assignment_to_json(const SearchSpace& space, const Assignment& a) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : a) {
    if (const auto* s = std::get_if<std::string>(&value)) {
      j[name] = *s;
      continue;
    }
    const double d = std::get<double>(value);
    const auto spec = std::find_if(space.begin(), space.end(), [&](const ParamSpec& p) { return p.name == name; });
    if (spec != space.end() && spec->kind == ParamKind::integer) {
      j[name] = static_cast<long long>(d);
    } else {
      j[name] = d;
    }
  }
  return j;
}

Assignment assignment_from_json(const nlohmann::json& j) {
  Assignment a;
  for (const auto& [name, value] : j.items()) {
    if (value.is_string()) {
      a[name] = value.get<std::string>();
    } else if (value.is_number()) {
      a[name] = value.get<double>();
    } else {
      throw ConfigError("assignment: '" + name + "' must be a number or string");
    }
  }
  return a;
}

}  // namespace hgnn
