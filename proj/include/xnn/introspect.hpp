#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "xnn/data.hpp"
#include "xnn/model.hpp"
#include "xnn/tensor.hpp"

namespace xnn {

// Sample-averaged attention over depth. Rows are receptors (queries), columns
// donors (keys).
struct AttentionReport {
  std::vector<Tensor> per_head;  // h maps, each k×k and row-stochastic
  std::vector<double> stress;    // mean attention received per donor layer
  std::size_t n_samples = 0;
};

AttentionReport attention_report(const XnnModel& model, const Dataset& ds, std::size_t batch_size = 256);
AttentionReport attention_report(const XnnModel& model, const Tensor& features, std::size_t batch_size = 256);

// Averages one batch of per-sample maps into a report.
AttentionReport report_from_maps(const AttentionMaps& maps);

// stress[j] = mean over heads and receptor rows of column j.
std::vector<double> stress_scores(const std::vector<Tensor>& per_head);

// Pairwise Frobenius distances between per-head maps (h×h, symmetric).
Tensor head_similarity(const AttentionReport& report);

// Writes head_<i>.csv (k×k, no header) and stress.csv (header layer_0..).
void export_heatmaps(const AttentionReport& report, const std::filesystem::path& dir);

}  // namespace xnn
