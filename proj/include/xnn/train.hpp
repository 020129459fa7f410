#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xnn/autodiff.hpp"
#include "xnn/data.hpp"
#include "xnn/model.hpp"

namespace xnn {

enum class Optimizer { sgd, adam };

Optimizer parse_optimizer(const std::string& name);
std::string to_string(Optimizer opt);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::optional<double> auc;
  double wall_time = 0.0;  // seconds since training started
};

struct History {
  std::vector<EpochRecord> epochs;
};

// `epoch,train_loss,val_loss,macro_f1,auc`; auc empty for multi-class.
std::string history_csv(const History& history);
void write_history_csv(const History& history, const std::filesystem::path& path);

struct AdamState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;
};

// Gradients are read from each parameter's gradient slot (absent = zero).
void sgd_step(std::span<Tensor* const> params, double learning_rate);
void adam_step(std::span<Tensor* const> params, AdamState& state, const TrainConfig& cfg);

struct EvalResult {
  std::size_t samples = 0;
  double loss = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::optional<double> auc;  // binary tasks with both classes present
};

// baseline → candidate; relative deltas are fractions of the baseline value.
struct EvalDelta {
  double loss_abs = 0.0;
  double loss_rel = 0.0;
  double macro_f1_abs = 0.0;
  double accuracy_abs = 0.0;
  double accuracy_rel = 0.0;
};
EvalDelta compare(const EvalResult& baseline, const EvalResult& candidate);

// Cross-entropy for c >= 2, sigmoid cross-entropy for a single-logit head.
Var classification_loss(Var logits, std::span<const int> labels);

template <class Model>
EvalResult evaluate(const Model& model, const Dataset& ds, std::size_t batch_size = 256);

using EpochCallback = std::function<void(const EpochRecord&)>;

template <class Model>
History train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

}  // namespace xnn
