#pragma once

#include <cstddef>
#include <span>

namespace xnn {

// Unweighted mean of per-class F1. A class absent from both pred and truth
// scores 0.
double macro_f1(std::span<const int> pred, std::span<const int> truth, std::size_t num_classes);

// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
// ties counting 1/2. Requires both classes present.
double auc(std::span<const double> scores, std::span<const int> truth);

double accuracy(std::span<const int> pred, std::span<const int> truth);

}  // namespace xnn
