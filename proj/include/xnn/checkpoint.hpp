#pragma once

// Checkpoint layout: one line of compact JSON terminated by '\n', then a raw
// little-endian IEEE-754 f64 payload.
//
//   {"buffers":[...],"class_names":[...],"config":{...},"format_version":1,
//    "kind":"xnn"|"control","parameters":[{"cols":..,"name":..,"offset":..,
//    "rows":..},...],"payload_bytes":..}
//
// Offsets are byte offsets into the payload. Parameters appear in the model's
// canonical order; "buffers" carries the input standardization, if any
// ("input.mean", "input.scale", each 1×L).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xnn/data.hpp"
#include "xnn/model.hpp"

namespace xnn {

inline constexpr int kCheckpointVersion = 1;

enum class ModelKind { xnn, control };

struct CheckpointMeta {
  std::vector<std::string> class_names;
  std::optional<Standardization> standardization;
};

struct LoadedCheckpoint {
  ModelKind kind = ModelKind::xnn;
  CheckpointMeta meta;
  std::optional<XnnModel> xnn;
  std::optional<ControlModel> control;

  const XnnConfig& config() const { return xnn ? xnn->config : control->config; }
};

std::string encode_checkpoint(const XnnModel& model, const CheckpointMeta& meta = {});
std::string encode_checkpoint(const ControlModel& model, const CheckpointMeta& meta = {});
// Throws CheckpointError naming the first header field that fails validation.
LoadedCheckpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const XnnModel& model, const CheckpointMeta& meta = {});
void save_checkpoint(const std::filesystem::path& path, const ControlModel& model, const CheckpointMeta& meta = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace xnn
