#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xnn/tensor.hpp"

namespace xnn {

// Per-column z-score parameters fitted on a training split. `scale` is the
// population std, or 1 for columns with std < 1e-12 (centered only).
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;
};

struct Dataset {
  Tensor features;  // n_samples × n_features
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  std::string label_name = "label";
  std::optional<Standardization> standardization;

  std::size_t size() const { return features.rows(); }
  std::size_t width() const { return features.cols(); }
  std::size_t num_classes() const { return class_names.size(); }

  // Throws DataError if labels/names are inconsistent with the features.
  void validate() const;
  // Copies selected rows (labels follow) into a new dataset.
  Dataset subset(std::span<const std::size_t> rows) const;
  // Feature rows gathered into a matrix, in the given order.
  Tensor gather(std::span<const std::size_t> rows) const;
};

struct CsvOptions {
  // Column name when `has_header`, otherwise a zero-based index. A numeric
  // string is also accepted as an index when no header column matches.
  std::string label_column = "label";
  bool has_header = true;
  // When non-empty, labels are mapped onto these names (unknown names are an
  // error) instead of being discovered from the file.
  std::vector<std::string> class_names;
};

// Labels are class names assigned indices in first-appearance order, unless
// every label is a non-negative integer, in which case the integer is the
// index and class names are "0".."max".
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

// Header of feature names plus the label column (last), one row per sample.
// Floats use the shortest decimal form that round-trips exactly.
void save_csv(const Dataset& ds, const std::filesystem::path& path);

struct Split {
  Dataset train;
  Dataset val;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

// Seeded Fisher-Yates permutation; the first floor(n·fraction) samples train.
Split split(const Dataset& ds, double train_fraction = 0.8, std::uint64_t seed = 0);

Standardization fit_standardization(const Dataset& train);
void apply_standardization(Tensor& features, const Standardization& stats);

struct Standardized {
  Dataset train;
  Dataset val;
  Standardization stats;
};

// Fits on train only and transforms both; the stats are attached to each result.
Standardized standardize(Dataset train, Dataset val);

// Binary labels from sign(w·x) over the first half of the features; the rest
// are label-independent noise.
Dataset synth_shallow(std::size_t n, std::size_t dim, std::uint64_t seed);

// Binary labels from the XOR of sign(x0) and sign(x1), i.e. the thresholded
// product x0·x1 < 0. Not linearly separable; remaining features are noise.
Dataset synth_deep(std::size_t n, std::size_t dim, std::uint64_t seed);

}  // namespace xnn
