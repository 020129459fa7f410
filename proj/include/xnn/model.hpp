#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xnn/autodiff.hpp"
#include "xnn/tensor.hpp"

namespace xnn {

struct XnnConfig {
  std::size_t input_dim = 0;
  std::size_t num_blocks = 3;  // k
  std::size_t base_width = 64;  // N
  std::size_t sublayers_per_block = 3;
  std::size_t d_model = 64;
  std::size_t heads = 8;
  std::size_t num_classes = 2;  // 1 selects a single-logit sigmoid head
  std::size_t head_hidden = 0;  // 0 means d_model
  double leaky_alpha = 0.01;
  std::uint64_t seed = 0;

  std::size_t hidden_width() const { return head_hidden == 0 ? d_model : head_hidden; }
  std::size_t head_dim() const { return d_model / heads; }
  // Throws ConfigError naming the offending field(s).
  void validate() const;
};

// Block widths N, N/2, ..., N/2^(k-1) (integer division).
std::vector<std::size_t> width_schedule(std::size_t base_width, std::size_t num_blocks);

struct Dense {
  Tensor weight;  // in × out
  Tensor bias;    // 1 × out
};

struct BasicLayerParams {
  std::vector<Dense> sublayers;
};

struct MultiHeadParams {
  Dense query;
  // No key bias: it adds the same q·b to every score in a row, which softmax
  // cancels, so it would never receive a gradient.
  Tensor key;  // d_model × d_model
  Dense value;
  Dense output;
};

struct XnnModel {
  XnnConfig config;
  std::vector<BasicLayerParams> blocks;
  std::vector<Dense> branch_proj;
  MultiHeadParams attn;
  Dense head_fc1;
  Dense head_fc2;

  // Visits every parameter tensor as (name, tensor) in checkpoint order.
  template <class F>
  void for_each_parameter(F&& f);
  template <class F>
  void for_each_parameter(F&& f) const;
};

struct ControlModel {
  XnnConfig config;
  std::vector<BasicLayerParams> blocks;
  Dense head_fc1;
  Dense head_fc2;

  template <class F>
  void for_each_parameter(F&& f);
  template <class F>
  void for_each_parameter(F&& f) const;
};

XnnModel build_xnn(const XnnConfig& cfg);
// Same trunk initialization as build_xnn for an identical config.
ControlModel build_control(const XnnConfig& cfg);

std::size_t parameter_count(const XnnModel& model);
std::size_t parameter_count(const ControlModel& model);

// Per-head attention weights for a batch.
struct AttentionMaps {
  std::size_t heads = 0;
  std::size_t batch = 0;
  std::size_t tokens = 0;  // k
  std::vector<double> values;  // ((sample·heads + head)·k + receptor)·k + donor

  double at(std::size_t head, std::size_t sample, std::size_t receptor, std::size_t donor) const {
    return values[((sample * heads + head) * tokens + receptor) * tokens + donor];
  }
};

struct XnnForward {
  Var logits;
  std::vector<Var> taps;  // raw block outputs V1..Vk
  AttentionMaps attention;
};

XnnForward forward_xnn(const XnnModel& model, Tape& tape, Var x);
Var forward_control(const ControlModel& model, Tape& tape, Var x, std::vector<Var>* taps = nullptr);

Var forward_logits(const XnnModel& model, Tape& tape, Var x);
Var forward_logits(const ControlModel& model, Tape& tape, Var x);

struct Prediction {
  std::vector<int> classes;
  Tensor probabilities;  // B×c (B×1 for a sigmoid head: probability of class 1)
};

// Softmax (c >= 2) or sigmoid (c = 1) of the logits; argmax ties go to the
// lower index and the binary threshold 0.5 maps to class 0.
Prediction predict_from_logits(const Tensor& logits);

template <class Model>
Prediction predict(const Model& model, const Tensor& x) {
  Tape tape;
  return predict_from_logits(forward_logits(model, tape, tape.constant(x)).value());
}

// ---------------------------------------------------------------------------

namespace detail {

template <class Self, class F>
void visit_trunk(Self& self, F& f) {
  for (std::size_t i = 0; i < self.blocks.size(); ++i) {
    auto& block = self.blocks[i];
    for (std::size_t j = 0; j < block.sublayers.size(); ++j) {
      const std::string p = "block" + std::to_string(i) + ".fc" + std::to_string(j);
      f(p + ".weight", block.sublayers[j].weight);
      f(p + ".bias", block.sublayers[j].bias);
    }
  }
}

template <class Self, class F>
void visit_dense(const std::string& prefix, Self& dense, F& f) {
  f(prefix + ".weight", dense.weight);
  f(prefix + ".bias", dense.bias);
}

template <class Self, class F>
void visit_xnn(Self& self, F& f) {
  visit_trunk(self, f);
  for (std::size_t i = 0; i < self.branch_proj.size(); ++i)
    visit_dense("branch" + std::to_string(i), self.branch_proj[i], f);
  visit_dense("attn.query", self.attn.query, f);
  f(std::string("attn.key.weight"), self.attn.key);
  visit_dense("attn.value", self.attn.value, f);
  visit_dense("attn.output", self.attn.output, f);
  visit_dense("head.fc1", self.head_fc1, f);
  visit_dense("head.fc2", self.head_fc2, f);
}

template <class Self, class F>
void visit_control(Self& self, F& f) {
  visit_trunk(self, f);
  visit_dense("head.fc1", self.head_fc1, f);
  visit_dense("head.fc2", self.head_fc2, f);
}

}  // namespace detail

template <class F>
void XnnModel::for_each_parameter(F&& f) {
  detail::visit_xnn(*this, f);
}
template <class F>
void XnnModel::for_each_parameter(F&& f) const {
  detail::visit_xnn(*this, f);
}
template <class F>
void ControlModel::for_each_parameter(F&& f) {
  detail::visit_control(*this, f);
}
template <class F>
void ControlModel::for_each_parameter(F&& f) const {
  detail::visit_control(*this, f);
}

template <class Model>
std::vector<Tensor*> parameter_tensors(Model& model) {
  std::vector<Tensor*> out;
  model.for_each_parameter([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

}  // namespace xnn
