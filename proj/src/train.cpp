#include "xnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "format.hpp"
#include "xnn/error.hpp"
#include "xnn/metrics.hpp"
#include "xnn/rng.hpp"

namespace xnn {

using detail::format_double;

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw ConfigError("optimizer must be 'sgd' or 'adam', got '" + name + "'");
}

std::string to_string(Optimizer opt) { return opt == Optimizer::sgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be a finite value >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

std::string history_csv(const History& history) {
  std::string out = "epoch,train_loss,val_loss,macro_f1,auc\n";
  for (const auto& r : history.epochs) {
    out += std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' + format_double(r.val_loss) + ',' +
           format_double(r.macro_f1) + ',' + (r.auc ? format_double(*r.auc) : std::string()) + '\n';
  }
  return out;
}

void write_history_csv(const History& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write history file " + path.string());
  out << history_csv(history);
  if (!out) throw Error("write failed for " + path.string());
}

void sgd_step(std::span<Tensor* const> params, double learning_rate) {
  for (Tensor* p : params) {
    if (!p->has_grad()) continue;
    auto g = p->grad();
    auto w = p->data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  }
}

void adam_step(std::span<Tensor* const> params, AdamState& state, const TrainConfig& cfg) {
  if (state.first.empty()) {
    for (Tensor* p : params) {
      state.first.emplace_back(p->size(), 0.0);
      state.second.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first.size() != params.size()) throw ShapeError("adam state tracks a different parameter list");
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    auto& m = state.first[k];
    auto& v = state.second[k];
    if (m.size() != p.size()) throw ShapeError("adam state shape mismatch for parameter " + std::to_string(k));
    const bool has = p.has_grad();
    std::span<const double> g = has ? std::span<const double>(p.grad()) : std::span<const double>();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

EvalDelta compare(const EvalResult& baseline, const EvalResult& candidate) {
  EvalDelta d;
  d.loss_abs = candidate.loss - baseline.loss;
  d.loss_rel = baseline.loss != 0.0 ? d.loss_abs / baseline.loss : 0.0;
  d.macro_f1_abs = candidate.macro_f1 - baseline.macro_f1;
  d.accuracy_abs = candidate.accuracy - baseline.accuracy;
  d.accuracy_rel = baseline.accuracy != 0.0 ? d.accuracy_abs / baseline.accuracy : 0.0;
  return d;
}

Var classification_loss(Var logits, std::span<const int> labels) {
  return logits.cols() == 1 ? binary_cross_entropy(logits, labels) : cross_entropy(logits, labels);
}

namespace {

void check_compatible(const XnnConfig& cfg, const Dataset& ds, const char* which) {
  if (ds.width() != cfg.input_dim)
    throw DataError(std::string(which) + " set has " + std::to_string(ds.width()) + " features, model expects " +
                    std::to_string(cfg.input_dim));
  if (ds.labels.size() != ds.size()) throw DataError(std::string(which) + " set label count mismatch");
  const std::size_t classes = std::max<std::size_t>(cfg.num_classes, 2);
  for (int y : ds.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw DataError(std::string(which) + " set label " + std::to_string(y) + " outside the model's " +
                      std::to_string(classes) + " classes");
}

}  // namespace

template <class Model>
EvalResult evaluate(const Model& model, const Dataset& ds, std::size_t batch_size) {
  if (ds.size() == 0) throw DataError("evaluate: empty dataset");
  check_compatible(model.config, ds, "evaluation");
  batch_size = std::max<std::size_t>(batch_size, 1);
  const std::size_t n = ds.size();
  const std::size_t c = model.config.num_classes;

  std::vector<int> pred;
  std::vector<double> positive;
  pred.reserve(n);
  positive.reserve(n);
  double loss_sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    Tape tape;
    tape.set_grad_enabled(false);
    Var logits = forward_logits(model, tape, tape.constant(ds.gather(rows)));
    std::span<const int> ys(ds.labels.data() + start, end - start);
    loss_sum += classification_loss(logits, ys).value()[0] * static_cast<double>(end - start);
    Prediction p = predict_from_logits(logits.value());
    pred.insert(pred.end(), p.classes.begin(), p.classes.end());
    for (std::size_t i = 0; i < end - start; ++i)
      positive.push_back(c == 1 ? p.probabilities[i] : c == 2 ? p.probabilities(i, 1) : 0.0);
  }

  EvalResult r;
  r.samples = n;
  r.loss = loss_sum / static_cast<double>(n);
  r.macro_f1 = macro_f1(pred, ds.labels, std::max<std::size_t>(c, 2));
  r.accuracy = accuracy(pred, ds.labels);
  if (c <= 2) {
    const bool has_pos = std::find(ds.labels.begin(), ds.labels.end(), 1) != ds.labels.end();
    const bool has_neg = std::find(ds.labels.begin(), ds.labels.end(), 0) != ds.labels.end();
    if (has_pos && has_neg) r.auc = auc(positive, ds.labels);
  }
  return r;
}

template <class Model>
History train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
              const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("train: empty training set");
  if (val_set.size() == 0) throw DataError("train: empty validation set");
  check_compatible(model.config, train_set, "training");
  check_compatible(model.config, val_set, "validation");

  std::vector<Tensor*> params = parameter_tensors(model);
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->clear_grad();
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = train_set.size();
  Rng rng(cfg.seed);
  AdamState adam;
  History history;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> ys;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle)
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      ys.clear();
      for (std::size_t r : rows) ys.push_back(train_set.labels[r]);

      Tape tape;
      Var logits = forward_logits(model, tape, tape.constant(train_set.gather(rows)));
      Var loss = classification_loss(logits, ys);
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      tape.backward(loss);
      if (cfg.optimizer == Optimizer::sgd)
        sgd_step(params, cfg.learning_rate);
      else
        adam_step(params, adam, cfg);
      for (Tensor* p : params) p->zero_grad();
      loss_sum += value * static_cast<double>(end - start);
    }

    EvalResult val = evaluate(model, val_set);
    if (!std::isfinite(val.loss))
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = val.loss;
    rec.macro_f1 = val.macro_f1;
    rec.accuracy = val.accuracy;
    rec.auc = val.auc;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (Tensor* p : params) p->clear_grad();
  return history;
}

template EvalResult evaluate<XnnModel>(const XnnModel&, const Dataset&, std::size_t);
template EvalResult evaluate<ControlModel>(const ControlModel&, const Dataset&, std::size_t);
template History train<XnnModel>(XnnModel&, const Dataset&, const Dataset&, const TrainConfig&, const EpochCallback&);
template History train<ControlModel>(ControlModel&, const Dataset&, const Dataset&, const TrainConfig&,
                                     const EpochCallback&);

}  // namespace xnn
