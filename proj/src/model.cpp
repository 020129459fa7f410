#include "xnn/model.hpp"

#include <cmath>

#include "xnn/error.hpp"
#include "xnn/rng.hpp"

namespace xnn {

void XnnConfig::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (num_blocks < 1) throw ConfigError("num_blocks (k) must be >= 1");
  if (sublayers_per_block < 1) throw ConfigError("sublayers_per_block must be >= 1");
  if (heads < 1) throw ConfigError("heads must be >= 1");
  if (d_model < 1) throw ConfigError("d_model must be >= 1");
  if (d_model % heads != 0)
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide d_model (" + std::to_string(d_model) + ")");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (!(leaky_alpha >= 0.0)) throw ConfigError("leaky_alpha must be >= 0");
  width_schedule(base_width, num_blocks);
}

std::vector<std::size_t> width_schedule(std::size_t base_width, std::size_t num_blocks) {
  if (num_blocks < 1) throw ConfigError("num_blocks (k) must be >= 1");
  std::vector<std::size_t> widths;
  std::size_t w = base_width;
  for (std::size_t i = 0; i < num_blocks; ++i) {
    if (w == 0)
      throw ConfigError("base_width " + std::to_string(base_width) + " with num_blocks " +
                        std::to_string(num_blocks) + " gives a width schedule reaching 0 (need base_width >= 2^(k-1))");
    widths.push_back(w);
    w /= 2;
  }
  return widths;
}

namespace {

// Uniform ±sqrt(6/fan_in) weights and zero bias; the stream depends only on
// (seed, parameter name).
Dense make_dense(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
  Dense d{Tensor(in, out), Tensor(1, out)};
  Rng rng = Rng::stream(seed, name + ".weight");
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  for (double& v : d.weight.data()) v = rng.uniform(-bound, bound);
  d.weight.set_requires_grad(true);
  d.bias.set_requires_grad(true);
  return d;
}

std::vector<BasicLayerParams> make_trunk(const XnnConfig& cfg) {
  const auto widths = width_schedule(cfg.base_width, cfg.num_blocks);
  std::vector<BasicLayerParams> blocks(cfg.num_blocks);
  std::size_t in = cfg.input_dim;
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    for (std::size_t j = 0; j < cfg.sublayers_per_block; ++j) {
      const std::string name = "block" + std::to_string(i) + ".fc" + std::to_string(j);
      blocks[i].sublayers.push_back(make_dense(name, in, widths[i], cfg.seed));
      in = widths[i];
    }
  }
  return blocks;
}

Var apply(Tape& tape, const Dense& d, Var x) { return affine(x, tape.leaf(d.weight), tape.leaf(d.bias)); }

void check_input(const XnnConfig& cfg, Var x) {
  if (x.cols() != cfg.input_dim)
    throw ShapeError("model input width mismatch: expected " + std::to_string(cfg.input_dim) + " columns, got " +
                     x.value().shape_str());
  if (x.rows() == 0) throw ShapeError("model input has no rows");
}

std::vector<Var> run_trunk(const std::vector<BasicLayerParams>& blocks, double alpha, Tape& tape, Var x) {
  std::vector<Var> taps;
  Var h = x;
  for (const auto& block : blocks) {
    for (const auto& layer : block.sublayers) h = leaky_relu(apply(tape, layer, h), alpha);
    taps.push_back(h);
  }
  return taps;
}

}  // namespace

XnnModel build_xnn(const XnnConfig& cfg) {
  cfg.validate();
  XnnModel m;
  m.config = cfg;
  m.blocks = make_trunk(cfg);
  const auto widths = width_schedule(cfg.base_width, cfg.num_blocks);
  for (std::size_t i = 0; i < cfg.num_blocks; ++i)
    m.branch_proj.push_back(make_dense("branch" + std::to_string(i), widths[i], cfg.d_model, cfg.seed));
  m.attn.query = make_dense("attn.query", cfg.d_model, cfg.d_model, cfg.seed);
  m.attn.key = make_dense("attn.key", cfg.d_model, cfg.d_model, cfg.seed).weight;
  m.attn.value = make_dense("attn.value", cfg.d_model, cfg.d_model, cfg.seed);
  m.attn.output = make_dense("attn.output", cfg.d_model, cfg.d_model, cfg.seed);
  m.head_fc1 = make_dense("head.fc1", cfg.num_blocks * cfg.d_model, cfg.hidden_width(), cfg.seed);
  m.head_fc2 = make_dense("head.fc2", cfg.hidden_width(), cfg.num_classes, cfg.seed);
  return m;
}

ControlModel build_control(const XnnConfig& cfg) {
  cfg.validate();
  ControlModel m;
  m.config = cfg;
  m.blocks = make_trunk(cfg);
  const std::size_t last = width_schedule(cfg.base_width, cfg.num_blocks).back();
  m.head_fc1 = make_dense("head.fc1", last, cfg.hidden_width(), cfg.seed);
  m.head_fc2 = make_dense("head.fc2", cfg.hidden_width(), cfg.num_classes, cfg.seed);
  return m;
}

std::size_t parameter_count(const XnnModel& model) {
  std::size_t n = 0;
  model.for_each_parameter([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::size_t parameter_count(const ControlModel& model) {
  std::size_t n = 0;
  model.for_each_parameter([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

XnnForward forward_xnn(const XnnModel& model, Tape& tape, Var x) {
  const XnnConfig& cfg = model.config;
  check_input(cfg, x);
  const std::size_t batch = x.rows();

  XnnForward fwd;
  fwd.taps = run_trunk(model.blocks, cfg.leaky_alpha, tape, x);

  std::vector<Var> branches;
  for (std::size_t i = 0; i < fwd.taps.size(); ++i)
    branches.push_back(sigmoid(apply(tape, model.branch_proj[i], fwd.taps[i])));
  Var tokens = stack_rows(branches);

  Var q = apply(tape, model.attn.query, tokens);
  Var k = matmul(tokens, tape.leaf(model.attn.key));
  Var v = apply(tape, model.attn.value, tokens);
  auto att = grouped_attention(q, k, v, batch, cfg.heads);
  Var mixed = apply(tape, model.attn.output, att.out);

  Var flat = reshape(mixed, batch, cfg.num_blocks * cfg.d_model);
  Var hidden = leaky_relu(apply(tape, model.head_fc1, flat), cfg.leaky_alpha);
  fwd.logits = apply(tape, model.head_fc2, hidden);

  fwd.attention.heads = cfg.heads;
  fwd.attention.batch = batch;
  fwd.attention.tokens = cfg.num_blocks;
  fwd.attention.values = std::move(att.weights);
  return fwd;
}

Var forward_control(const ControlModel& model, Tape& tape, Var x, std::vector<Var>* taps) {
  const XnnConfig& cfg = model.config;
  check_input(cfg, x);
  auto t = run_trunk(model.blocks, cfg.leaky_alpha, tape, x);
  Var hidden = leaky_relu(apply(tape, model.head_fc1, t.back()), cfg.leaky_alpha);
  Var logits = apply(tape, model.head_fc2, hidden);
  if (taps) *taps = std::move(t);
  return logits;
}

Var forward_logits(const XnnModel& model, Tape& tape, Var x) { return forward_xnn(model, tape, x).logits; }

Var forward_logits(const ControlModel& model, Tape& tape, Var x) { return forward_control(model, tape, x); }

Prediction predict_from_logits(const Tensor& logits) {
  Prediction p;
  const std::size_t m = logits.rows(), c = logits.cols();
  p.probabilities = Tensor(m, c);
  p.classes.resize(m);
  if (c == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double z = logits[i];
      const double prob = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      p.probabilities[i] = prob;
      p.classes[i] = prob > 0.5 ? 1 : 0;
    }
    return p;
  }
  for (std::size_t i = 0; i < m; ++i) {
    auto row = logits.row(i);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[arg]) arg = j;
    double z = 0.0;
    auto out = p.probabilities.row(i);
    for (std::size_t j = 0; j < c; ++j) z += (out[j] = std::exp(row[j] - row[arg]));
    for (double& v : out) v /= z;
    p.classes[i] = static_cast<int>(arg);
  }
  return p;
}

}  // namespace xnn
