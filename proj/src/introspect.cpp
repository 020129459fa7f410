#include "xnn/introspect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "format.hpp"
#include "xnn/error.hpp"

namespace xnn {

using detail::format_double;

std::vector<double> stress_scores(const std::vector<Tensor>& per_head) {
  if (per_head.empty()) return {};
  const std::size_t k = per_head.front().cols();
  std::vector<double> stress(k, 0.0);
  for (const Tensor& m : per_head)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) stress[j] += m(i, j);
  const double denom = static_cast<double>(per_head.size() * k);
  for (double& s : stress) s /= denom;
  return stress;
}

AttentionReport report_from_maps(const AttentionMaps& maps) {
  AttentionReport r;
  r.n_samples = maps.batch;
  const std::size_t k = maps.tokens;
  r.per_head.assign(maps.heads, Tensor(k, k));
  for (std::size_t b = 0; b < maps.batch; ++b)
    for (std::size_t h = 0; h < maps.heads; ++h)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) r.per_head[h](i, j) += maps.at(h, b, i, j);
  if (maps.batch > 0)
    for (Tensor& m : r.per_head)
      for (double& v : m.data()) v /= static_cast<double>(maps.batch);
  r.stress = stress_scores(r.per_head);
  return r;
}

AttentionReport attention_report(const XnnModel& model, const Tensor& features, std::size_t batch_size) {
  const std::size_t n = features.rows();
  if (n == 0) throw DataError("attention_report: empty dataset");
  if (features.cols() != model.config.input_dim)
    throw DataError("attention_report: data has " + std::to_string(features.cols()) + " features, model expects " +
                    std::to_string(model.config.input_dim));
  batch_size = std::max<std::size_t>(batch_size, 1);
  const std::size_t h = model.config.heads, k = model.config.num_blocks;

  // Sums run in sample order so the result does not depend on batching.
  std::vector<Tensor> sums(h, Tensor(k, k));
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    Tensor x(end - start, features.cols());
    std::copy(features.data().begin() + static_cast<std::ptrdiff_t>(start * features.cols()),
              features.data().begin() + static_cast<std::ptrdiff_t>(end * features.cols()), x.data().begin());
    Tape tape;
    tape.set_grad_enabled(false);
    auto fwd = forward_xnn(model, tape, tape.constant(std::move(x)));
    const AttentionMaps& maps = fwd.attention;
    for (std::size_t b = 0; b < maps.batch; ++b)
      for (std::size_t hd = 0; hd < h; ++hd)
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) sums[hd](i, j) += maps.at(hd, b, i, j);
  }

  AttentionReport r;
  r.n_samples = n;
  for (Tensor& m : sums)
    for (double& v : m.data()) v /= static_cast<double>(n);
  r.per_head = std::move(sums);
  r.stress = stress_scores(r.per_head);
  return r;
}

AttentionReport attention_report(const XnnModel& model, const Dataset& ds, std::size_t batch_size) {
  return attention_report(model, ds.features, batch_size);
}

Tensor head_similarity(const AttentionReport& report) {
  const std::size_t h = report.per_head.size();
  Tensor d(h, h);
  for (std::size_t a = 0; a < h; ++a) {
    for (std::size_t b = a + 1; b < h; ++b) {
      const auto& x = report.per_head[a];
      const auto& y = report.per_head[b];
      if (!x.same_shape(y)) throw ShapeError("head_similarity: heads have different shapes");
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
      d(a, b) = d(b, a) = std::sqrt(s);
    }
  }
  return d;
}

void export_heatmaps(const AttentionReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());

  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
  };

  for (std::size_t h = 0; h < report.per_head.size(); ++h) {
    const Tensor& m = report.per_head[h];
    std::string text;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (j) text += ',';
        text += format_double(m(i, j));
      }
      text += '\n';
    }
    write(dir / ("head_" + std::to_string(h) + ".csv"), text);
  }

  std::string header, row;
  for (std::size_t j = 0; j < report.stress.size(); ++j) {
    if (j) {
      header += ',';
      row += ',';
    }
    header += "layer_" + std::to_string(j);
    row += format_double(report.stress[j]);
  }
  write(dir / "stress.csv", header + '\n' + row + '\n');
}

}  // namespace xnn
