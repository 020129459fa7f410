#include "xnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "kernels.hpp"
#include "xnn/error.hpp"

namespace xnn {

namespace {

std::string shapes(const Tensor& a, const Tensor& b) { return a.shape_str() + " and " + b.shape_str(); }

void require_same_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw Error("operation on an empty Var");
  if (a.tape() != b.tape()) throw Error("operands recorded on different tapes");
}

// Saturating logistic; the output is clamped into the open interval (0, 1).
double logistic(double x) {
  constexpr double kHi = 1.0 - 0x1.0p-53;
  constexpr double kLo = std::numeric_limits<double>::min();
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kLo, kHi);
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const {
  if (!tape_) throw Error("value() on an empty Var");
  return tape_->value(id_);
}

std::span<const double> Var::grad() const {
  if (!tape_) throw Error("grad() on an empty Var");
  return tape_->grad_if_any(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::leaf(const Tensor& external) {
  Node n;
  n.ref = &external;
  n.needs_grad = grad_enabled_ && external.requires_grad();
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& p : parents) {
    check_owns(p);
    n.needs_grad = n.needs_grad || nodes_[p.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::check_owns(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw Error("Var does not belong to this tape");
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.ref ? *n.ref : n.owned;
}

std::span<double> Tape::grad(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

std::span<const double> Tape::grad_if_any(std::size_t id) const { return nodes_.at(id).grad; }

void Tape::backward(Var loss) {
  if (loss.tape() != this || loss.id() >= nodes_.size()) throw Error("backward: loss is not on this tape");
  const Tensor& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be 1x1, got " + lv.shape_str());

  for (Node& n : nodes_) n.grad.clear();
  grad(loss.id())[0] = 1.0;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, id);
    } else if (n.ref && n.ref->requires_grad()) {
      n.ref->accumulate_grad(n.grad);
    }
  }
}

void backward(Tape& tape, Var loss) { tape.backward(loss); }

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) throw ShapeError("matmul: shape mismatch " + shapes(A, B));
  const std::size_t m = A.rows(), n = A.cols(), p = B.cols();
  Tensor C(m, p);
  kernels::gemm_nn(A.data().data(), B.data().data(), C.data().data(), m, n, p);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(C), {a, b}, [ia, ib, m, n, p](Tape& t, std::size_t self) {
    auto dc = t.grad(self);
    if (t.needs_grad(ia))
      kernels::gemm_nt(dc.data(), t.value(ib).data().data(), t.grad(ia).data(), m, p, n);
    if (t.needs_grad(ib))
      kernels::gemm_tn(t.value(ia).data().data(), dc.data(), t.grad(ib).data(), m, n, p);
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor T(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T(j, i) = A(i, j);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(T), {a}, [ia, m, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var affine(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const Tensor& Bv = b.value();
  if (X.cols() != W.rows()) throw ShapeError("affine: input/weight mismatch " + shapes(X, W));
  if (Bv.rows() != 1 || Bv.cols() != W.cols())
    throw ShapeError("affine: bias " + Bv.shape_str() + " does not match weight " + W.shape_str());
  const std::size_t m = X.rows(), n = X.cols(), p = W.cols();
  Tensor Y(m, p);
  for (std::size_t i = 0; i < m; ++i) std::copy(Bv.data().begin(), Bv.data().end(), Y.row(i).begin());
  kernels::gemm_nn(X.data().data(), W.data().data(), Y.data().data(), m, n, p);
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(Y), {x, w, b}, [ix, iw, ib, m, n, p](Tape& t, std::size_t self) {
    auto dy = t.grad(self);
    if (t.needs_grad(ix))
      kernels::gemm_nt(dy.data(), t.value(iw).data().data(), t.grad(ix).data(), m, p, n);
    if (t.needs_grad(iw))
      kernels::gemm_tn(t.value(ix).data().data(), dy.data(), t.grad(iw).data(), m, n, p);
    if (t.needs_grad(ib)) {
      auto db = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) db[j] += dy[i * p + j];
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) throw ShapeError("add: shape mismatch " + shapes(A, B));
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(C), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (!t.needs_grad(id)) continue;
      auto d = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor C = a.value();
  for (double& v : C.data()) v *= factor;
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(C), {a}, [ia, factor](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto d = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor(1, 1, s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& d : t.grad(ia)) d += g;
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Var sigmoid(Var x) {
  Tensor S = Tensor::like(x.value());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < S.size(); ++i) S[i] = logistic(in[i]);
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(S), {x}, [ix](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto s = t.value(self).data();
    auto d = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var leaky_relu(Var x, double alpha) {
  if (!(alpha >= 0.0)) throw Error("leaky_relu: alpha must be >= 0");
  Tensor Y = Tensor::like(x.value());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = in[i] > 0.0 ? in[i] : alpha * in[i];
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(Y), {x}, [ix, alpha](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto in = t.value(ix).data();
    auto d = t.grad(ix);
    // Subgradient at exactly 0 is alpha.
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += in[i] > 0.0 ? g[i] : alpha * g[i];
  });
}

Var softmax_rows(Var x) {
  const Tensor& X = x.value();
  const std::size_t m = X.rows(), n = X.cols();
  Tensor Y(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto xi = X.row(i);
    auto yi = Y.row(i);
    const double mx = *std::max_element(xi.begin(), xi.end());
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (yi[j] = std::exp(xi[j] - mx));
    for (double& v : yi) v /= z;
  }
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(Y), {x}, [ix, m, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto y = t.value(self).data();
    auto d = t.grad(ix);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape ops

Var stack_rows(std::span<const Var> vs) {
  if (vs.empty()) throw ShapeError("stack_rows: need at least one input");
  const std::size_t k = vs.size();
  const std::size_t batch = vs[0].rows(), d = vs[0].cols();
  for (const Var& v : vs) {
    require_same_tape(vs[0], v);
    if (v.cols() != d || v.rows() != batch)
      throw ShapeError("stack_rows: width mismatch " + shapes(vs[0].value(), v.value()));
  }
  Tensor out(batch * k, d);
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& src = vs[i].value();
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(src.row(b).begin(), d, out.row(b * k + i).begin());
  }
  std::vector<std::size_t> ids;
  for (const Var& v : vs) ids.push_back(v.id());
  return vs[0].tape()->record(std::move(out), vs, [ids, batch, d](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const std::size_t k = ids.size();
    for (std::size_t i = 0; i < k; ++i) {
      if (!t.needs_grad(ids[i])) continue;
      auto dst = t.grad(ids[i]);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < d; ++j) dst[b * d + j] += g[(b * k + i) * d + j];
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  const Tensor& X = x.value();
  if (rows * cols != X.size())
    throw ShapeError("reshape: cannot view " + X.shape_str() + " as " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  Tensor Y(rows, cols, std::vector<double>(X.data().begin(), X.data().end()));
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(Y), {x}, [ix](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto d = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var flatten(Var x) { return reshape(x, 1, x.value().size()); }

// ---------------------------------------------------------------------------
// Attention

AttentionOutput scaled_dot_attention(Var q, Var k, Var v) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Tensor& Q = q.value();
  if (!Q.same_shape(k.value()) || !Q.same_shape(v.value()))
    throw ShapeError("scaled_dot_attention: q " + Q.shape_str() + ", k " + k.value().shape_str() + ", v " +
                     v.value().shape_str() + " must share a shape");
  if (Q.cols() == 0) throw ShapeError("scaled_dot_attention: head width must be >= 1");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  Var weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
  return {matmul(weights, v), weights};
}

GroupedAttentionOutput grouped_attention(Var q, Var k, Var v, std::size_t groups, std::size_t heads) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  if (!Q.same_shape(K) || !Q.same_shape(V))
    throw ShapeError("grouped_attention: q " + Q.shape_str() + ", k " + K.shape_str() + ", v " + V.shape_str() +
                     " must share a shape");
  if (groups == 0 || heads == 0 || Q.rows() % groups != 0 || Q.cols() % heads != 0 || Q.cols() == 0)
    throw ShapeError("grouped_attention: " + Q.shape_str() + " does not split into " + std::to_string(groups) +
                     " groups and " + std::to_string(heads) + " heads");
  const std::size_t tokens = Q.rows() / groups;
  const std::size_t width = Q.cols();
  const std::size_t dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto weights = std::make_shared<std::vector<double>>(groups * heads * tokens * tokens);
  Tensor out(Q.rows(), width);
  std::vector<double> scores(tokens);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * tokens;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      double* w = weights->data() + (g * heads + h) * tokens * tokens;
      for (std::size_t i = 0; i < tokens; ++i) {
        const double* qi = Q.data().data() + (base + i) * width + c0;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < tokens; ++j) {
          const double* kj = K.data().data() + (base + j) * width + c0;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j] = s * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) z += (w[i * tokens + j] = std::exp(scores[j] - mx));
        double* oi = &out(base + i, c0);
        for (std::size_t j = 0; j < tokens; ++j) {
          const double wij = (w[i * tokens + j] /= z);
          const double* vj = V.data().data() + (base + j) * width + c0;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += wij * vj[c];
        }
      }
    }
  }

  GroupedAttentionOutput result;
  result.weights = *weights;
  result.groups = groups;
  result.heads = heads;
  result.tokens = tokens;

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  result.out = q.tape()->record(
      std::move(out), {q, k, v},
      [iq, ik, iv, weights, groups, heads, tokens, width, dh, inv_sqrt](Tape& t, std::size_t self) {
        auto dout = t.grad(self);
        const auto Qd = t.value(iq).data();
        const auto Kd = t.value(ik).data();
        const auto Vd = t.value(iv).data();
        std::span<double> dq, dk, dv;
        if (t.needs_grad(iq)) dq = t.grad(iq);
        if (t.needs_grad(ik)) dk = t.grad(ik);
        if (t.needs_grad(iv)) dv = t.grad(iv);
        std::vector<double> dw(tokens), ds(tokens);
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t base = g * tokens;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            const double* w = weights->data() + (g * heads + h) * tokens * tokens;
            for (std::size_t i = 0; i < tokens; ++i) {
              const double* doi = dout.data() + (base + i) * width + c0;
              // dW_ij = dO_i · V_j ; dV_j += W_ij dO_i
              double dot = 0.0;
              for (std::size_t j = 0; j < tokens; ++j) {
                const double* vj = Vd.data() + (base + j) * width + c0;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
                dw[j] = s;
                dot += s * w[i * tokens + j];
                if (!dv.empty()) {
                  double* dvj = dv.data() + (base + j) * width + c0;
                  const double wij = w[i * tokens + j];
                  for (std::size_t c = 0; c < dh; ++c) dvj[c] += wij * doi[c];
                }
              }
              for (std::size_t j = 0; j < tokens; ++j) ds[j] = w[i * tokens + j] * (dw[j] - dot) * inv_sqrt;
              const double* qi = Qd.data() + (base + i) * width + c0;
              for (std::size_t j = 0; j < tokens; ++j) {
                const double* kj = Kd.data() + (base + j) * width + c0;
                if (!dq.empty()) {
                  double* dqi = dq.data() + (base + i) * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds[j] * kj[c];
                }
                if (!dk.empty()) {
                  double* dkj = dk.data() + (base + j) * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds[j] * qi[c];
                }
              }
            }
          }
        }
      });
  return result;
}

// ---------------------------------------------------------------------------
// Losses

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& X = logits.value();
  const std::size_t m = X.rows(), c = X.cols();
  if (labels.size() != m)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) +
                     " rows");
  if (m == 0) throw ShapeError("cross_entropy: empty batch");
  auto probs = std::make_shared<std::vector<double>>(m * c);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw DataError("cross_entropy: label " + std::to_string(y) + " out of range [0, " + std::to_string(c) +
                      ")");
    auto xi = X.row(i);
    const std::size_t arg = static_cast<std::size_t>(std::max_element(xi.begin(), xi.end()) - xi.begin());
    const double mx = xi[arg];
    double rest = 0.0;
    double* pi = probs->data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      pi[j] = std::exp(xi[j] - mx);
      if (j != arg) rest += pi[j];
    }
    const double z = 1.0 + rest;
    for (std::size_t j = 0; j < c; ++j) pi[j] /= z;
    total += (mx - xi[static_cast<std::size_t>(y)]) + std::log1p(rest);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.tape()->record(Tensor(1, 1, total / static_cast<double>(m)), {logits},
                               [il, probs, ys = std::move(ys), m, c](Tape& t, std::size_t self) {
                                 const double g = t.grad(self)[0] / static_cast<double>(m);
                                 auto d = t.grad(il);
                                 for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t j = 0; j < c; ++j) {
                                     const double onehot = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
                                     d[i * c + j] += g * ((*probs)[i * c + j] - onehot);
                                   }
                                 }
                               });
}

Var binary_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& X = logits.value();
  const std::size_t m = X.rows();
  if (X.cols() != 1) throw ShapeError("binary_cross_entropy: expects a single logit column, got " + X.shape_str());
  if (labels.size() != m)
    throw ShapeError("binary_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(m) + " rows");
  if (m == 0) throw ShapeError("binary_cross_entropy: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) throw DataError("binary_cross_entropy: label " + std::to_string(y) + " is not 0/1");
    const double z = X[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  std::vector<int> ys(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.tape()->record(Tensor(1, 1, total / static_cast<double>(m)), {logits},
                               [il, ys = std::move(ys), m](Tape& t, std::size_t self) {
                                 const double g = t.grad(self)[0] / static_cast<double>(m);
                                 const auto z = t.value(il).data();
                                 auto d = t.grad(il);
                                 for (std::size_t i = 0; i < m; ++i) d[i] += g * (logistic(z[i]) - ys[i]);
                               });
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double scalar_of(Var v) {
  const Tensor& t = v.value();
  if (t.rows() != 1 || t.cols() != 1) throw ShapeError("grad_check: f must return a 1x1 value, got " + t.shape_str());
  return t[0];
}

}  // namespace

double grad_check(const ScalarFn& f, std::span<const Tensor> inputs, double eps) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be > 0");
  std::vector<Tensor> xs(inputs.begin(), inputs.end());

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& x : xs) vars.push_back(tape.variable(x));
    Var out = f(tape, vars);
    scalar_of(out);
    tape.backward(out);
    for (const Var& v : vars) {
      auto g = v.grad();
      analytic.emplace_back(g.begin(), g.end());
      analytic.back().resize(v.value().size(), 0.0);
    }
  }

  auto evaluate = [&] {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& x : xs) vars.push_back(tape.constant(x));
    return scalar_of(f(tape, vars));
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < xs[i].size(); ++j) {
      const double saved = xs[i][j];
      xs[i][j] = saved + eps;
      const double up = evaluate();
      xs[i][j] = saved - eps;
      const double down = evaluate();
      xs[i][j] = saved;
      worst = std::max(worst, relative_error(analytic[i][j], (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

double grad_check_params(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params, double eps) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be > 0");
  std::vector<bool> flags;
  for (Tensor* p : params) {
    flags.push_back(p->requires_grad());
    p->set_requires_grad(true);
    p->clear_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Var out = f(tape);
    scalar_of(out);
    tape.backward(out);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i]->grad();
    analytic.emplace_back(g.begin(), g.end());
    params[i]->clear_grad();
    params[i]->set_requires_grad(false);
  }

  auto evaluate = [&] {
    Tape tape;
    return scalar_of(f(tape));
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double saved = p[j];
      p[j] = saved + eps;
      const double up = evaluate();
      p[j] = saved - eps;
      const double down = evaluate();
      p[j] = saved;
      worst = std::max(worst, relative_error(analytic[i][j], (up - down) / (2.0 * eps)));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->set_requires_grad(flags[i]);
  return worst;
}

}  // namespace xnn
