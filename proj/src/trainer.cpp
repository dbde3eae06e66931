#include "hgnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

namespace hgnn {

// ---- losses -----------------------------------------------------------------

namespace {

void check_labels(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
  }
  if (logits.rows() == 0) throw ContractError("loss: empty batch");
  for (int y : labels) {
    if (y < 0 || y >= logits.cols()) throw ContractError("loss: label " + std::to_string(y) + " out of range");
  }
  if (!logits.allFinite()) throw TrainingError("loss: non-finite logits");
}

Matrix softmax_rows(const Matrix& x) {
  Matrix p = x.colwise() - x.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p = p.array().colwise() / p.rowwise().sum().array();
  return p;
}

}  // namespace

std::vector<double> per_sample_loss(LossKind kind, const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  std::vector<double> out(labels.size());
  const Index c = logits.cols();
  for (Index i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const int y = labels[static_cast<std::size_t>(i)];
    if (kind == LossKind::cross_entropy) {
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      out[static_cast<std::size_t>(i)] = lse - row(y);
    } else {
      double s = 0;
      for (Index j = 0; j < c; ++j) {
        if (j != y) s += std::max(0.0, 1.0 - row(y) + row(j));
      }
      out[static_cast<std::size_t>(i)] = s / static_cast<double>(c);
    }
  }
  return out;
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  const Matrix& x = logits.value();
  const auto losses = per_sample_loss(LossKind::cross_entropy, x, labels);
  const double n = static_cast<double>(x.rows());
  Matrix value(1, 1);
  value(0, 0) = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  std::vector<int> y(labels.begin(), labels.end());
  return make_op(std::move(value), {logits}, [logits, y, n](const Matrix& g) {
    Matrix d = softmax_rows(logits.value());
    for (std::size_t i = 0; i < y.size(); ++i) d(static_cast<Index>(i), y[i]) -= 1.0;
    accumulate(logits, d * (g(0, 0) / n));
  });
}

Tensor multi_margin_loss(const Tensor& logits, std::span<const int> labels, double margin) {
  const Matrix& x = logits.value();
  check_labels(x, labels);
  const Index c = x.cols();
  const double n = static_cast<double>(x.rows());
  Matrix grad = Matrix::Zero(x.rows(), c);
  double total = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < c; ++j) {
      if (j == y) continue;
      const double h = margin - x(i, y) + x(i, j);
      if (h > 0) {
        total += h;
        grad(i, j) += 1.0;
        grad(i, y) -= 1.0;
      }
    }
  }
  const double norm = 1.0 / (static_cast<double>(c) * n);
  Matrix value(1, 1);
  value(0, 0) = total * norm;
  grad *= norm;
  return make_op(std::move(value), {logits}, [logits, grad](const Matrix& g) { accumulate(logits, grad * g(0, 0)); });
}

Tensor compute_loss(LossKind kind, const Tensor& logits, std::span<const int> labels) {
  return kind == LossKind::cross_entropy ? cross_entropy_loss(logits, labels) : multi_margin_loss(logits, labels);
}

// ---- optimizers -------------------------------------------------------------

Optimizer::Optimizer(const OptimizerConfig& config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)), lr_(config.learning_rate) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    buf_.push_back(Matrix());
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
  ++t_;
  const auto& c = config_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    Matrix& w = p.mutable_value();
    Matrix g = p.grad();
    if (c.weight_decay != 0.0) g += c.weight_decay * w;
    if (c.l1_lambda != 0.0) g += c.l1_lambda * w.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
    switch (c.kind) {
      case OptimizerKind::sgd:
        if (c.momentum != 0.0) {
          if (buf_[k].size() == 0) {
            buf_[k] = g;
          } else {
            buf_[k] = c.momentum * buf_[k] + g;
          }
          g = buf_[k];
        }
        w -= lr_ * g;
        break;
      case OptimizerKind::adam: {
        m_[k] = c.beta1 * m_[k] + (1.0 - c.beta1) * g;
        v_[k] = c.beta2 * v_[k] + (1.0 - c.beta2) * g.cwiseProduct(g);
        const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
        w.array() -= lr_ * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + c.eps);
        break;
      }
      case OptimizerKind::rmsprop: {
        v_[k] = c.alpha * v_[k] + (1.0 - c.alpha) * g.cwiseProduct(g);
        Matrix step = (g.array() / (v_[k].array() + c.eps).sqrt()).matrix();
        if (c.momentum != 0.0) {
          if (buf_[k].size() == 0) buf_[k] = Matrix::Zero(w.rows(), w.cols());
          buf_[k] = c.momentum * buf_[k] + step;
          step = buf_[k];
        }
        w -= lr_ * step;
        break;
      }
    }
  }
}

// ---- schedulers -------------------------------------------------------------

Scheduler::Scheduler(const SchedulerConfig& config, double base_lr, long long planned_steps, int batch_size)
    : config_(config), base_lr_(base_lr), lr_(base_lr) {
  if (config_.kind == SchedulerKind::one_cycle) {
    const long long nominal = config_.total_steps > 0 ? config_.total_steps : 1000LL * batch_size;
    total_steps_ = std::max(1LL, std::min(nominal, planned_steps));
  }
  lr_ = config_.kind == SchedulerKind::reduce_on_plateau ? base_lr_ : rate_at(0);
}

bool Scheduler::per_batch() const {
  return config_.kind == SchedulerKind::cyclic || config_.kind == SchedulerKind::one_cycle;
}

double Scheduler::rate_at(long long t) const {
  const auto& s = config_;
  const double td = static_cast<double>(t);
  switch (s.kind) {
    case SchedulerKind::constant:
    case SchedulerKind::reduce_on_plateau: return base_lr_;
    case SchedulerKind::step: return base_lr_ * std::pow(s.gamma, static_cast<double>(t / s.step_size));
    case SchedulerKind::exponential: return base_lr_ * std::pow(s.gamma, td);
    case SchedulerKind::polynomial: {
      const double frac = std::min(td, static_cast<double>(s.total_iters)) / s.total_iters;
      return base_lr_ * std::pow(1.0 - frac, s.power);
    }
    case SchedulerKind::cosine_annealing:
      return s.eta_min + (base_lr_ - s.eta_min) * (1.0 + std::cos(std::numbers::pi * td / s.t_max)) / 2.0;
    case SchedulerKind::cyclic: {
      const double up = s.step_size_up;
      const double cycle = std::floor(1.0 + td / (2.0 * up));
      const double x = std::abs(td / up - 2.0 * cycle + 1.0);
      return s.base_lr + (s.max_lr - s.base_lr) * std::max(0.0, 1.0 - x);
    }
    case SchedulerKind::one_cycle: {
      const double initial = s.max_lr / 25.0;
      const double final_lr = initial / 1e4;
      const double total = static_cast<double>(total_steps_);
      const double peak = s.pct_start * total;
      auto anneal = [](double from, double to, double pct) {
        return to + (from - to) * (1.0 + std::cos(std::numbers::pi * pct)) / 2.0;
      };
      const double tc = std::min(td, total);
      if (tc <= peak) return anneal(initial, s.max_lr, peak > 0 ? tc / peak : 1.0);
      return anneal(s.max_lr, final_lr, (tc - peak) / (total - peak));
    }
  }
  return base_lr_;
}

void Scheduler::on_batch_end() {
  if (!per_batch()) return;
  ++t_;
  lr_ = rate_at(t_);
}

void Scheduler::on_epoch_end(double val_loss) {
  if (per_batch()) return;
  if (config_.kind == SchedulerKind::reduce_on_plateau) {
    if (!has_best_ || val_loss < best_ * (1.0 - config_.threshold)) {
      best_ = val_loss;
      has_best_ = true;
      bad_epochs_ = 0;
    } else {
      ++bad_epochs_;
    }
    if (bad_epochs_ > config_.patience) {
      const double reduced = lr_ * config_.factor;
      if (lr_ - reduced > config_.plateau_eps) lr_ = reduced;
      bad_epochs_ = 0;
    }
    return;
  }
  ++t_;
  lr_ = rate_at(t_);
}

// ---- metrics ----------------------------------------------------------------

void to_json(nlohmann::json& j, const MetricsReport& m) {
  j = {{"accuracy", m.accuracy},         {"weighted_f1", m.weighted_f1},
       {"mean_loss", m.mean_loss},       {"loss_std", m.loss_std},
       {"per_class_f1", m.per_class_f1}, {"support", m.support}};
}

void from_json(const nlohmann::json& j, MetricsReport& m) {
  m.accuracy = j.at("accuracy").get<double>();
  m.weighted_f1 = j.at("weighted_f1").get<double>();
  m.mean_loss = j.at("mean_loss").get<double>();
  m.loss_std = j.at("loss_std").get<double>();
  m.per_class_f1 = j.value("per_class_f1", std::vector<double>{});
  m.support = j.value("support", std::vector<int>{});
}

std::vector<std::vector<int>> confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                               int n_classes) {
  if (truth.size() != predicted.size()) throw DimensionError("confusion: length mismatch");
  std::vector<std::vector<int>> m(static_cast<std::size_t>(n_classes), std::vector<int>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || predicted[i] < 0 || predicted[i] >= n_classes) {
      throw ContractError("confusion: class index out of range");
    }
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return m;
}

MetricsReport classification_metrics(std::span<const int> truth, std::span<const int> predicted, int n_classes) {
  if (truth.empty()) throw ContractError("metrics: empty evaluation set");
  const auto cm = confusion_matrix(truth, predicted, n_classes);
  MetricsReport r;
  const double n = static_cast<double>(truth.size());
  int correct = 0;
  r.per_class_f1.assign(static_cast<std::size_t>(n_classes), 0.0);
  r.support.assign(static_cast<std::size_t>(n_classes), 0);
  for (int c = 0; c < n_classes; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    int tp = cm[cu][cu], fn = 0, fp = 0;
    for (int o = 0; o < n_classes; ++o) {
      if (o == c) continue;
      fn += cm[cu][static_cast<std::size_t>(o)];
      fp += cm[static_cast<std::size_t>(o)][cu];
    }
    correct += tp;
    r.support[cu] = tp + fn;
    const int denom = 2 * tp + fp + fn;
    r.per_class_f1[cu] = denom == 0 ? 0.0 : 2.0 * tp / denom;
    r.weighted_f1 += r.per_class_f1[cu] * r.support[cu] / n;
  }
  r.accuracy = correct / n;
  return r;
}

void attach_losses(MetricsReport& report, std::span<const double> losses) {
  if (losses.empty()) throw ContractError("metrics: no losses");
  const double n = static_cast<double>(losses.size());
  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  double ss = 0;
  for (double l : losses) ss += (l - mean) * (l - mean);
  report.mean_loss = mean;
  report.loss_std = std::sqrt(ss / n);
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

MetricsReport evaluate(Model& model, const std::vector<EncodedGraph>& data, LossKind loss, int chunk) {
  if (data.empty()) throw ContractError("evaluate: empty evaluation set");
  const bool was_training = model.training();
  model.set_training(false);
  std::vector<int> truth, predicted;
  std::vector<double> losses;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(chunk));
    std::vector<int> idx(end - start);
    std::iota(idx.begin(), idx.end(), static_cast<int>(start));
    const Batch b = make_batch(data, idx);
    const Matrix logits = model.forward(b).value();
    if (!logits.allFinite()) {
      model.set_training(was_training);
      throw TrainingError("evaluate: non-finite logits");
    }
    const auto l = per_sample_loss(loss, logits, b.labels);
    const auto p = argmax_rows(logits);
    losses.insert(losses.end(), l.begin(), l.end());
    predicted.insert(predicted.end(), p.begin(), p.end());
    truth.insert(truth.end(), b.labels.begin(), b.labels.end());
  }
  model.set_training(was_training);
  MetricsReport r = classification_metrics(truth, predicted, model.config().output_size);
  attach_losses(r, losses);
  return r;
}

// ---- training loop ----------------------------------------------------------

std::string to_string(PrimaryMetric m) { return m == PrimaryMetric::accuracy ? "accuracy" : "weighted_f1"; }

double primary_value(const MetricsReport& m, PrimaryMetric metric) {
  return metric == PrimaryMetric::accuracy ? m.accuracy : m.weighted_f1;
}

std::string to_string(TrainStatus s) {
  switch (s) {
    case TrainStatus::completed: return "completed";
    case TrainStatus::pruned: return "pruned";
    case TrainStatus::failed: return "failed";
  }
  return "?";
}

bool EarlyStopping::update(double metric) {
  if (!has_best_ || metric > best_) {
    best_ = metric;
    has_best_ = true;
    stagnant_ = 0;
  } else {
    ++stagnant_;
  }
  return patience_ > 0 && stagnant_ >= patience_;
}

std::size_t best_epoch_index(const std::vector<MetricsReport>& history, PrimaryMetric metric) {
  if (history.empty()) throw ContractError("best epoch: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const double a = primary_value(history[i], metric);
    const double b = primary_value(history[best], metric);
    if (a > b || (a == b && history[i].mean_loss < history[best].mean_loss)) best = i;
  }
  return best;
}

TrainOutcome train(Model& model, const std::vector<EncodedGraph>& train_set,
                   const std::vector<EncodedGraph>& val_set, const TrainOptions& options) {
  if (train_set.empty() || val_set.empty()) throw ContractError("train: empty split");
  if (options.max_epochs < 1) throw ContractError("train: max_epochs must be >= 1");
  const auto started = std::chrono::steady_clock::now();
  const ModelConfig& config = model.config();
  const int batch_size = config.batch_size;
  const long long batches_per_epoch =
      (static_cast<long long>(train_set.size()) + batch_size - 1) / batch_size;

  Optimizer optimizer(config.optimizer, model.parameters());
  Scheduler scheduler(config.scheduler, config.optimizer.learning_rate,
                      batches_per_epoch * options.max_epochs, batch_size);
  optimizer.set_learning_rate(scheduler.learning_rate());
  EarlyStopping stopper(options.patience);
  std::mt19937_64 rng(options.seed);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainOutcome out;
  auto finish = [&]() {
    if (!out.epoch_history.empty()) {
      const auto best = best_epoch_index(out.epoch_history, options.primary);
      out.best_epoch = static_cast<int>(best) + 1;
      out.best_metrics = out.epoch_history[best];
    }
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
  };
  auto fail = [&](const std::string& why) {
    out.status = TrainStatus::failed;
    out.failure = why;
    return finish();
  };

  model.set_training(true);
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    const double epoch_lr = optimizer.learning_rate();
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      const Batch b = make_batch(train_set, std::span<const int>(order.data() + start, end - start));
      Tensor loss;
      try {
        loss = compute_loss(config.loss, model.forward(b), b.labels);
      } catch (const TrainingError& e) {
        return fail(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      if (!std::isfinite(loss.item())) return fail("non-finite loss at epoch " + std::to_string(epoch));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      scheduler.on_batch_end();
      optimizer.set_learning_rate(scheduler.learning_rate());
      loss_sum += loss.item() * static_cast<double>(end - start);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    MetricsReport val;
    try {
      val = evaluate(model, val_set, config.loss);
    } catch (const TrainingError& e) {
      return fail(std::string(e.what()) + " at epoch " + std::to_string(epoch));
    }
    if (!std::isfinite(val.mean_loss)) return fail("non-finite validation loss at epoch " + std::to_string(epoch));
    out.epoch_history.push_back(val);
    out.train_loss.push_back(train_loss);
    out.learning_rates.push_back(epoch_lr);
    if (options.history) {
      nlohmann::json rec = {{"trial", options.trial_index}, {"epoch", epoch},
                            {"loss", val.mean_loss},        {"train_loss", train_loss},
                            {"accuracy", val.accuracy},     {"weighted_f1", val.weighted_f1},
                            {"lr", epoch_lr}};
      *options.history << rec.dump() << '\n';
    }
    scheduler.on_epoch_end(val.mean_loss);
    optimizer.set_learning_rate(scheduler.learning_rate());

    const double metric = primary_value(val, options.primary);
    if (options.pruning_hook && options.pruning_hook(epoch, metric)) {
      out.status = TrainStatus::pruned;
      return finish();
    }
    if (stopper.update(metric)) {
      out.stopped_early = epoch < options.max_epochs;
      break;
    }
  }
  return finish();
}

}  // namespace hgnn
