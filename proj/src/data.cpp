#include "xnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string_view>
#include <unordered_map>

#include "format.hpp"
#include "xnn/error.hpp"
#include "xnn/rng.hpp"

namespace xnn {

using detail::format_double;

void Dataset::validate() const {
  if (labels.size() != features.rows())
    throw DataError("dataset has " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(features.rows()) + " samples");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_names.size())
      throw DataError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                      " outside [0, " + std::to_string(class_names.size()) + ")");
  }
  if (!feature_names.empty() && feature_names.size() != features.cols())
    throw DataError("dataset has " + std::to_string(feature_names.size()) + " feature names for " +
                    std::to_string(features.cols()) + " columns");
}

Tensor Dataset::gather(std::span<const std::size_t> rows) const {
  Tensor out(rows.size(), width());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = gather(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels[r]);
  out.class_names = class_names;
  out.feature_names = feature_names;
  out.label_name = label_name;
  out.standardization = standardization;
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_index(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file " + path.string());

  std::string line;
  std::vector<std::string_view> fields;
  std::size_t line_no = 0;
  std::size_t field_count = 0;
  std::vector<std::string> header;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  if (!next_line()) throw DataError("CSV file " + path.string() + " is empty");
  split_fields(line, fields);
  field_count = fields.size();
  if (field_count < 2) throw DataError("CSV needs at least one feature column and a label column");

  std::size_t label_col = field_count;
  bool first_is_data = true;
  if (options.has_header) {
    first_is_data = false;
    for (auto f : fields) header.emplace_back(f);
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == options.label_column) label_col = c;
  }
  if (label_col == field_count) {
    std::size_t idx = 0;
    if (parse_index(trim(options.label_column), idx) && idx < field_count) label_col = idx;
  }
  if (label_col == field_count)
    throw DataError("label column '" + options.label_column + "' not found in " + path.string());

  Dataset ds;
  if (options.has_header) {
    ds.label_name = header[label_col];
    for (std::size_t c = 0; c < field_count; ++c)
      if (c != label_col) ds.feature_names.push_back(header[c]);
  } else {
    for (std::size_t c = 0, j = 0; c < field_count; ++c)
      if (c != label_col) ds.feature_names.push_back("f" + std::to_string(j++));
  }

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  const std::size_t width = field_count - 1;

  auto consume = [&] {
    if (fields.size() != field_count)
      throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " + std::to_string(field_count) +
                      " fields, got " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < field_count; ++c) {
      if (c == label_col) {
        if (fields[c].empty()) throw DataError("missing label at line " + std::to_string(line_no));
        raw_labels.emplace_back(fields[c]);
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[c], v))
        throw DataError("unparseable cell at line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                        ": '" + std::string(fields[c]) + "'");
      values.push_back(v);
    }
  };

  if (first_is_data) consume();
  while (next_line()) {
    split_fields(line, fields);
    consume();
  }
  const std::size_t n = raw_labels.size();
  if (n == 0) throw DataError("CSV file " + path.string() + " has no data rows");
  values.shrink_to_fit();
  ds.features = Tensor(n, width, std::move(values));

  ds.labels.resize(n);
  if (!options.class_names.empty()) {
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < options.class_names.size(); ++i) index[options.class_names[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = index.find(raw_labels[i]);
      if (it == index.end()) throw DataError("unknown class label '" + raw_labels[i] + "' in row " + std::to_string(i));
      ds.labels[i] = it->second;
    }
    ds.class_names = options.class_names;
  } else {
    bool integral = true;
    std::size_t max_label = 0;
    for (const auto& s : raw_labels) {
      std::size_t v = 0;
      if (!parse_index(s, v) || v > 1'000'000) {
        integral = false;
        break;
      }
      max_label = std::max(max_label, v);
    }
    if (integral) {
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t v = 0;
        parse_index(raw_labels[i], v);
        ds.labels[i] = static_cast<int>(v);
      }
      for (std::size_t c = 0; c <= max_label; ++c) ds.class_names.push_back(std::to_string(c));
    } else {
      std::unordered_map<std::string, int> index;
      for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = index.try_emplace(raw_labels[i], static_cast<int>(ds.class_names.size()));
        if (inserted) ds.class_names.push_back(raw_labels[i]);
        ds.labels[i] = it->second;
      }
    }
  }
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV file " + path.string());
  std::string buf;
  for (std::size_t c = 0; c < ds.width(); ++c) {
    buf += ds.feature_names.empty() ? "f" + std::to_string(c) : ds.feature_names[c];
    buf += ',';
  }
  buf += ds.label_name;
  buf += '\n';
  out << buf;
  char num[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    buf.clear();
    for (double v : ds.features.row(i)) {
      const auto res = std::to_chars(num, num + sizeof(num), v);
      buf.append(num, res.ptr);
      buf += ',';
    }
    buf += ds.class_names[static_cast<std::size_t>(ds.labels[i])];
    buf += '\n';
    out << buf;
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Split split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1), got " + format_double(train_fraction));
  const std::size_t n = ds.size();
  if (n == 0) throw DataError("cannot split an empty dataset");
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
  if (n_train == 0 || n_train == n)
    throw DataError("train_fraction " + format_double(train_fraction) + " leaves an empty split for " +
                    std::to_string(n) + " samples");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

  Split s;
  s.train_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  s.train = ds.subset(s.train_indices);
  s.val = ds.subset(s.val_indices);
  return s;
}

Standardization fit_standardization(const Dataset& train) {
  const std::size_t n = train.size(), d = train.width();
  if (n == 0) throw DataError("cannot fit standardization on an empty dataset");
  Standardization st;
  st.mean.assign(d, 0.0);
  st.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = train.features.row(i);
    for (std::size_t j = 0; j < d; ++j) st.mean[j] += row[j];
  }
  for (double& m : st.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = train.features.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = row[j] - st.mean[j];
      st.scale[j] += dev * dev;
    }
  }
  for (double& s : st.scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  return st;
}

void apply_standardization(Tensor& features, const Standardization& stats) {
  const std::size_t d = features.cols();
  if (stats.mean.size() != d || stats.scale.size() != d)
    throw DataError("standardization has " + std::to_string(stats.mean.size()) + " columns, data has " +
                    std::to_string(d));
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto row = features.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - stats.mean[j]) / stats.scale[j];
  }
}

Standardized standardize(Dataset train, Dataset val) {
  Standardized out;
  out.stats = fit_standardization(train);
  apply_standardization(train.features, out.stats);
  if (val.size() > 0) apply_standardization(val.features, out.stats);
  train.standardization = out.stats;
  val.standardization = out.stats;
  out.train = std::move(train);
  out.val = std::move(val);
  return out;
}

namespace {

Dataset synth_frame(std::size_t n, std::size_t dim, Rng& rng) {
  Dataset ds;
  ds.features = Tensor(n, dim);
  for (double& v : ds.features.data()) v = rng.normal();
  ds.labels.resize(n);
  ds.class_names = {"0", "1"};
  for (std::size_t j = 0; j < dim; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  return ds;
}

}  // namespace

Dataset synth_shallow(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n < 4) throw ConfigError("synth_shallow: n must be >= 4, got " + std::to_string(n));
  if (dim < 2) throw ConfigError("synth_shallow: dim must be >= 2, got " + std::to_string(dim));
  Rng weights = Rng::stream(seed, "synth_shallow.weights");
  const std::size_t signal = std::max<std::size_t>(1, dim / 2);
  std::vector<double> w(signal);
  for (double& v : w) v = weights.normal();

  Rng rng = Rng::stream(seed, "synth_shallow.samples");
  Dataset ds = synth_frame(n, dim, rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.features.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < signal; ++j) s += w[j] * row[j];
    ds.labels[i] = s > 0.0 ? 1 : 0;
  }
  return ds;
}

Dataset synth_deep(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n < 4) throw ConfigError("synth_deep: n must be >= 4, got " + std::to_string(n));
  if (dim < 2) throw ConfigError("synth_deep: dim must be >= 2, got " + std::to_string(dim));
  Rng rng = Rng::stream(seed, "synth_deep.samples");
  Dataset ds = synth_frame(n, dim, rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.features.row(i);
    // XOR of the two sign bits. A 4-way parity was tried first and stayed at
    // chance for n=2000 with 30 noise columns.
    ds.labels[i] = (row[0] > 0.0) != (row[1] > 0.0) ? 1 : 0;
  }
  return ds;
}

}  // namespace xnn
