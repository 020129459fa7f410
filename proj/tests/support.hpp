#pragma once

// Test-only oracles. Nothing here calls into the autodiff tape, so these can
// check the library independently.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "xnn/data.hpp"
#include "xnn/model.hpp"
#include "xnn/rng.hpp"
#include "xnn/tensor.hpp"

namespace xnn::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < a.cols(); ++r) s += a(i, r) * b(r, j);
      c(i, j) = s;
    }
  return c;
}

// Softmax in long double, no shift tricks beyond the max.
inline std::vector<long double> softmax_ld(const std::vector<double>& row) {
  long double mx = row[0];
  for (double v : row) mx = std::max<long double>(mx, v);
  std::vector<long double> out;
  long double z = 0;
  for (double v : row) {
    out.push_back(std::exp(static_cast<long double>(v) - mx));
    z += out.back();
  }
  for (auto& v : out) v /= z;
  return out;
}

struct NaiveAttention {
  Tensor out;
  Tensor weights;
};

inline NaiveAttention naive_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t n = q.rows(), d = q.cols();
  NaiveAttention r{Tensor(n, d), Tensor(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores(n);
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += static_cast<long double>(q(i, c)) * k(j, c);
      scores[j] = static_cast<double>(s / std::sqrt(static_cast<long double>(d)));
    }
    auto w = softmax_ld(scores);
    for (std::size_t j = 0; j < n; ++j) r.weights(i, j) = static_cast<double>(w[j]);
    for (std::size_t c = 0; c < d; ++c) {
      long double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += w[j] * v(j, c);
      r.out(i, c) = static_cast<double>(s);
    }
  }
  return r;
}

// Central differences of a plain scalar function of one tensor.
inline Tensor finite_diff(const std::function<double(const Tensor&)>& f, Tensor x, double eps = 1e-5) {
  Tensor g = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Macro F1 from an explicit confusion matrix.
inline double brute_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, std::size_t c) {
  std::vector<std::vector<long>> cm(c, std::vector<long>(c, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm[truth[i]][pred[i]];
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    long tp = cm[k][k], fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += cm[j][k];
      fn += cm[k][j];
    }
    if (tp + fp + fn > 0) total += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  }
  return total / static_cast<double>(c);
}

// AUC by enumerating every (positive, negative) pair.
inline double brute_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (truth[i] == 1 && truth[j] == 0) {
        ++pairs;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
  return wins / static_cast<double>(pairs);
}

// Smallest |pre-activation| over every LeakyReLU in the model for input x,
// computed with the scalar matmul oracle.
inline double min_leaky_preactivation(const XnnModel& m, const Tensor& x) {
  double lowest = std::numeric_limits<double>::infinity();
  auto dense = [&](const Dense& d, const Tensor& in) {
    Tensor z = naive_matmul(in, d.weight);
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) {
        z(i, j) += d.bias(0, j);
        lowest = std::min(lowest, std::abs(z(i, j)));
      }
    for (double& v : z.data()) v = v > 0 ? v : m.config.leaky_alpha * v;
    return z;
  };
  Tensor h = x;
  for (const auto& block : m.blocks)
    for (const auto& layer : block.sublayers) h = dense(layer, h);
  return lowest;
}

// Plain full-batch logistic regression on z-scored raw features; reports
// held-out accuracy. Used as the shallow baseline.
inline double logistic_baseline_accuracy(const Dataset& train, const Dataset& test, int iterations = 500,
                                         double lr = 0.5) {
  const std::size_t d = train.width(), n = train.size();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += train.features(i, j) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) sd[j] += std::pow(train.features(i, j) - mean[j], 2) / static_cast<double>(n);
  for (double& s : sd) s = s > 1e-24 ? std::sqrt(s) : 1.0;
  auto z = [&](const Dataset& ds, std::size_t i, std::size_t j) { return (ds.features(i, j) - mean[j]) / sd[j]; };

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = b;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * z(train, i, j);
      const double p = 1.0 / (1.0 + std::exp(-s));
      const double e = p - train.labels[i];
      for (std::size_t j = 0; j < d; ++j) gw[j] += e * z(train, i, j);
      gb += e;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= lr * gw[j] / static_cast<double>(n);
    b -= lr * gb / static_cast<double>(n);
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double s = b;
    for (std::size_t j = 0; j < d; ++j) s += w[j] * z(test, i, j);
    hit += (s > 0.0 ? 1 : 0) == test.labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(test.size());
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("xnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace xnn::testing
