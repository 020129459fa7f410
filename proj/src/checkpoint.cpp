#include "xnn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "xnn/error.hpp"

namespace xnn {

using nlohmann::json;

namespace {

struct Entry {
  std::string name;
  const Tensor* tensor;
};

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

json config_json(const XnnConfig& c) {
  return json{{"input_dim", c.input_dim},     {"num_blocks", c.num_blocks},
              {"base_width", c.base_width},   {"sublayers_per_block", c.sublayers_per_block},
              {"d_model", c.d_model},         {"heads", c.heads},
              {"num_classes", c.num_classes}, {"head_hidden", c.head_hidden},
              {"leaky_alpha", c.leaky_alpha}, {"seed", c.seed}};
}

template <class T>
T field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) throw CheckpointError(path, "missing");
  const json& v = obj.at(key);
  if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw CheckpointError(path, "expected a number");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw CheckpointError(path, "expected a non-negative integer");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw CheckpointError(path, "expected a string");
  }
  return v.get<T>();
}

XnnConfig parse_config(const json& header) {
  if (!header.contains("config") || !header["config"].is_object()) throw CheckpointError("config", "missing");
  const json& c = header["config"];
  XnnConfig cfg;
  cfg.input_dim = field<std::size_t>(c, "input_dim", "config.input_dim");
  cfg.num_blocks = field<std::size_t>(c, "num_blocks", "config.num_blocks");
  cfg.base_width = field<std::size_t>(c, "base_width", "config.base_width");
  cfg.sublayers_per_block = field<std::size_t>(c, "sublayers_per_block", "config.sublayers_per_block");
  cfg.d_model = field<std::size_t>(c, "d_model", "config.d_model");
  cfg.heads = field<std::size_t>(c, "heads", "config.heads");
  cfg.num_classes = field<std::size_t>(c, "num_classes", "config.num_classes");
  cfg.head_hidden = field<std::size_t>(c, "head_hidden", "config.head_hidden");
  cfg.leaky_alpha = field<double>(c, "leaky_alpha", "config.leaky_alpha");
  cfg.seed = field<std::uint64_t>(c, "seed", "config.seed");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError("config", e.what());
  }
  return cfg;
}

std::string encode(const char* kind, const XnnConfig& cfg, const std::vector<Entry>& params,
                   const CheckpointMeta& meta) {
  std::vector<Entry> buffers;
  Tensor mean, scale;
  if (meta.standardization) {
    const auto& st = *meta.standardization;
    mean = Tensor(1, st.mean.size(), st.mean);
    scale = Tensor(1, st.scale.size(), st.scale);
    buffers.push_back({"input.mean", &mean});
    buffers.push_back({"input.scale", &scale});
  }

  std::size_t offset = 0;
  auto describe = [&](const std::vector<Entry>& list) {
    json arr = json::array();
    for (const auto& e : list) {
      arr.push_back({{"name", e.name}, {"rows", e.tensor->rows()}, {"cols", e.tensor->cols()}, {"offset", offset}});
      offset += e.tensor->size() * 8;
    }
    return arr;
  };

  json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = kind;
  header["config"] = config_json(cfg);
  header["class_names"] = meta.class_names;
  header["parameters"] = describe(params);
  header["buffers"] = describe(buffers);
  header["payload_bytes"] = offset;

  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + offset);
  const std::vector<Entry>* lists[] = {&params, &buffers};
  for (const auto* list : lists)
    for (const auto& e : *list)
      for (double v : e.tensor->data()) put_f64(out, v);
  return out;
}

template <class Model>
std::vector<Entry> entries(const Model& model) {
  std::vector<Entry> out;
  model.for_each_parameter([&](const std::string& name, const Tensor& t) { out.push_back({name, &t}); });
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

// Checks a header tensor list against the expected names/shapes and fills the
// destination tensors from the payload.
void read_tensors(const json& header, const std::string& key, const std::vector<std::pair<std::string, Tensor*>>& want,
                  std::size_t& offset, const unsigned char* payload, std::size_t payload_bytes) {
  if (!header.contains(key) || !header[key].is_array()) throw CheckpointError(key, "missing or not an array");
  const json& arr = header[key];
  if (arr.size() != want.size())
    throw CheckpointError(key, "expected " + std::to_string(want.size()) + " entries, found " +
                                   std::to_string(arr.size()));
  for (std::size_t i = 0; i < want.size(); ++i) {
    const std::string path = key + "[" + std::to_string(i) + "]";
    const auto name = field<std::string>(arr[i], "name", path + ".name");
    if (name != want[i].first) throw CheckpointError(path + ".name", "expected '" + want[i].first + "', found '" + name + "'");
    Tensor& t = *want[i].second;
    const auto rows = field<std::size_t>(arr[i], "rows", path + ".rows");
    const auto cols = field<std::size_t>(arr[i], "cols", path + ".cols");
    if (rows != t.rows() || cols != t.cols())
      throw CheckpointError(path + ".rows", name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                                ", config implies " + t.shape_str());
    const auto off = field<std::size_t>(arr[i], "offset", path + ".offset");
    if (off != offset) throw CheckpointError(path + ".offset", "expected " + std::to_string(offset));
    if (off + t.size() * 8 > payload_bytes) throw CheckpointError(path + ".offset", "extends past the payload");
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = get_f64(payload + off + 8 * j);
    offset += t.size() * 8;
  }
}

}  // namespace

std::string encode_checkpoint(const XnnModel& model, const CheckpointMeta& meta) {
  return encode("xnn", model.config, entries(model), meta);
}

std::string encode_checkpoint(const ControlModel& model, const CheckpointMeta& meta) {
  return encode("control", model.config, entries(model), meta);
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw CheckpointError("header", "no header terminator found");
  json header;
  try {
    header = json::parse(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(nl));
  } catch (const json::exception& e) {
    throw CheckpointError("header", std::string("invalid JSON: ") + e.what());
  }
  if (!header.is_object()) throw CheckpointError("header", "not a JSON object");

  const auto version = field<std::size_t>(header, "format_version", "format_version");
  if (version != static_cast<std::size_t>(kCheckpointVersion))
    throw CheckpointError("format_version", "unsupported version " + std::to_string(version));
  const auto kind = field<std::string>(header, "kind", "kind");
  if (kind != "xnn" && kind != "control") throw CheckpointError("kind", "unknown model kind '" + kind + "'");
  const XnnConfig cfg = parse_config(header);

  LoadedCheckpoint out;
  if (!header.contains("class_names") || !header["class_names"].is_array())
    throw CheckpointError("class_names", "missing or not an array");
  for (const auto& c : header["class_names"]) {
    if (!c.is_string()) throw CheckpointError("class_names", "entries must be strings");
    out.meta.class_names.push_back(c.get<std::string>());
  }

  const auto payload_bytes = field<std::size_t>(header, "payload_bytes", "payload_bytes");
  const std::size_t available = bytes.size() - nl - 1;
  if (available != payload_bytes)
    throw CheckpointError("payload_bytes", "header declares " + std::to_string(payload_bytes) + " bytes, file has " +
                                               std::to_string(available));
  const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);

  std::vector<std::pair<std::string, Tensor*>> want;
  auto collect = [&](const std::string& name, Tensor& t) { want.emplace_back(name, &t); };
  if (kind == "xnn") {
    out.kind = ModelKind::xnn;
    out.xnn = build_xnn(cfg);
    out.xnn->for_each_parameter(collect);
  } else {
    out.kind = ModelKind::control;
    out.control = build_control(cfg);
    out.control->for_each_parameter(collect);
  }
  std::size_t offset = 0;
  read_tensors(header, "parameters", want, offset, payload, payload_bytes);

  if (!header.contains("buffers") || !header["buffers"].is_array()) throw CheckpointError("buffers", "missing");
  Tensor mean(1, cfg.input_dim), scale(1, cfg.input_dim);
  std::vector<std::pair<std::string, Tensor*>> bufs;
  if (!header["buffers"].empty()) bufs = {{"input.mean", &mean}, {"input.scale", &scale}};
  read_tensors(header, "buffers", bufs, offset, payload, payload_bytes);
  if (!bufs.empty()) {
    Standardization st;
    st.mean.assign(mean.data().begin(), mean.data().end());
    st.scale.assign(scale.data().begin(), scale.data().end());
    out.meta.standardization = std::move(st);
  }
  if (offset != payload_bytes) throw CheckpointError("payload_bytes", "tensors cover " + std::to_string(offset) + " bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const XnnModel& model, const CheckpointMeta& meta) {
  write_file(path, encode_checkpoint(model, meta));
}

void save_checkpoint(const std::filesystem::path& path, const ControlModel& model, const CheckpointMeta& meta) {
  write_file(path, encode_checkpoint(model, meta));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("file", "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace xnn
