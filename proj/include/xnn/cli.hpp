#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "xnn/model.hpp"
#include "xnn/train.hpp"

namespace xnn::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kRuntime = 4 };

// JSON experiment description. Keys are exactly the member names below
// (adam_betas is a two-element array, optimizer a string); unknown keys are
// rejected. input_dim and num_classes may be 0 to take them from the data.
struct ExperimentConfig {
  XnnConfig model;
  TrainConfig train;
  std::string data;
  std::string label_column = "label";
  bool has_header = true;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  bool standardize = true;
  bool with_control = false;
  std::string output_dir = "out";
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_json(const ExperimentConfig& cfg);

// Runs one command (`synth`, `train`, `eval`, `attn`); args exclude argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace xnn::cli
