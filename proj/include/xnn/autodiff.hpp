#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "xnn/tensor.hpp"

namespace xnn {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  // Gradient of the last backward pass, or an empty span if none reached it.
  std::span<const double> grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run record of a forward pass. Nodes are appended in evaluation
// order, so operands always precede their consumers and backward is a single
// reverse sweep. Build a fresh tape per forward pass.
class Tape {
 public:
  // Local backward rule: reads the node's upstream gradient via `grad(self)`
  // and accumulates into operand gradients.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // With gradients disabled nothing is marked as needing a gradient, so no
  // backward rules are kept (inference mode).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Owned value that never receives a gradient.
  Var constant(Tensor value);
  // Owned leaf whose gradient is kept on the tape (readable through Var::grad).
  Var variable(Tensor value);
  // Non-owning leaf. If `external.requires_grad()`, backward adds this node's
  // gradient into `external.grad()`. `external` must outlive the tape.
  Var leaf(const Tensor& external);

  // Appends an op result. `backward` is dropped when no parent needs a gradient.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps every node once in reverse order.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  // Upstream gradient buffer of a node, zero-initialized on first access.
  std::span<double> grad(std::size_t id);
  std::span<const double> grad_if_any(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void check_owns(const Var& v) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    std::vector<double> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

void backward(Tape& tape, Var loss);

Var matmul(Var a, Var b);
Var transpose(Var a);
// x·w + b with b broadcast over rows.
Var affine(Var x, Var w, Var b);
Var add(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var sigmoid(Var x);
Var leaky_relu(Var x, double alpha = 0.01);
Var softmax_rows(Var x);

// Interleaving stack: given k inputs of shape B×d, returns (B·k)×d where row
// b·k + i is row b of input i. For B = 1 this is the plain row stack.
Var stack_rows(std::span<const Var> vs);
Var reshape(Var x, std::size_t rows, std::size_t cols);
// Row-major flatten to 1×(rows·cols).
Var flatten(Var x);

struct AttentionOutput {
  Var out;
  Var weights;
};

// Single-sequence attention: weights = softmax(q·kᵀ/√dh), out = weights·v.
AttentionOutput scaled_dot_attention(Var q, Var k, Var v);

struct GroupedAttentionOutput {
  Var out;
  // Layout: ((group·heads + head)·tokens + receptor)·tokens + donor.
  std::vector<double> weights;
  std::size_t groups = 0;
  std::size_t heads = 0;
  std::size_t tokens = 0;
};

// Fused multi-head attention over `groups` independent sequences packed as
// consecutive row blocks of q, k, v (each (groups·tokens)×(heads·dh)). Head h
// uses columns [h·dh, (h+1)·dh). Gradients flow through `out` only.
GroupedAttentionOutput grouped_attention(Var q, Var k, Var v, std::size_t groups, std::size_t heads);

// Mean softmax cross-entropy over rows (log-sum-exp form).
Var cross_entropy(Var logits, std::span<const int> labels);
// Mean sigmoid cross-entropy for a single-logit head; labels in {0, 1}.
Var binary_cross_entropy(Var logits, std::span<const int> labels);

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Max relative error between tape gradients and central differences over
// every entry of every input; denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const ScalarFn& f, std::span<const Tensor> inputs, double eps = 1e-5);

// Same for externally owned tensors (typically model parameters) that `f`
// binds with Tape::leaf. Parameter values are restored on return.
double grad_check_params(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params,
                         double eps = 1e-5);

}  // namespace xnn
