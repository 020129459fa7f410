#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <bit>
#include <cstring>

#include "json.hpp"
#include "support.hpp"
#include "xnn/checkpoint.hpp"
#include "xnn/error.hpp"

using namespace xnn;
using nlohmann::json;

namespace {

XnnConfig config(std::uint64_t seed = 3) {
  XnnConfig c;
  c.input_dim = 6;
  c.base_width = 8;
  c.d_model = 4;
  c.heads = 2;
  c.num_classes = 3;
  c.seed = seed;
  return c;
}

// Perturbs every parameter so the payload carries more than the init.
template <class Model>
void scramble(Model& m, std::uint64_t seed) {
  Rng rng(seed);
  m.for_each_parameter([&](const std::string&, Tensor& t) {
    for (double& v : t.data()) v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
  });
}

std::string expect_error_field(const std::string& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.field();
  }
  return "<no error>";
}

std::pair<json, std::string> split_bytes(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  return {json::parse(bytes.substr(0, nl)), bytes.substr(nl + 1)};
}

std::string join(const json& header, const std::string& payload) { return header.dump() + "\n" + payload; }

}  // namespace

TEST_CASE("layout matches the documented format") {
  XnnModel m = build_xnn(config());
  scramble(m, 1);
  const std::string bytes = encode_checkpoint(m, {{"a", "b", "c"}, std::nullopt});
  auto [header, payload] = split_bytes(bytes);
  CHECK(header["format_version"] == 1);
  CHECK(header["kind"] == "xnn");
  CHECK(header["config"]["d_model"] == 4);
  CHECK(header["class_names"] == json({"a", "b", "c"}));
  CHECK(header["buffers"].empty());
  CHECK(header["payload_bytes"] == payload.size());
  CHECK(payload.size() == parameter_count(m) * 8);

  // Decode the payload by hand: little-endian f64 at each listed offset.
  std::size_t i = 0;
  m.for_each_parameter([&](const std::string& name, const Tensor& t) {
    const json& entry = header["parameters"][i++];
    CHECK(entry["name"] == name);
    CHECK(entry["rows"] == t.rows());
    CHECK(entry["cols"] == t.cols());
    const std::size_t off = entry["offset"];
    for (std::size_t j = 0; j < t.size(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[off + 8 * j + b])) << (8 * b);
      CHECK(std::bit_cast<double>(bits) == t[j]);
    }
  });
  CHECK(i == header["parameters"].size());
}

TEST_CASE("save, load, save is byte identical") {
  const auto dir = xnn::testing::temp_dir("checkpoint_roundtrip");
  Standardization st{{0.5, -1, 2, 3, 4, 1e-300}, {1, 2, 3, 4, 5, 6}};
  SUBCASE("xnn") {
    XnnModel m = build_xnn(config());
    scramble(m, 2);
    save_checkpoint(dir / "a.ckpt", m, {{"x", "y", "z"}, st});
    LoadedCheckpoint ck = load_checkpoint(dir / "a.ckpt");
    REQUIRE(ck.kind == ModelKind::xnn);
    REQUIRE(ck.xnn);
    CHECK(ck.meta.class_names == std::vector<std::string>{"x", "y", "z"});
    REQUIRE(ck.meta.standardization);
    CHECK(ck.meta.standardization->mean == st.mean);
    CHECK(ck.meta.standardization->scale == st.scale);
    save_checkpoint(dir / "b.ckpt", *ck.xnn, ck.meta);
    CHECK(xnn::testing::slurp(dir / "a.ckpt") == xnn::testing::slurp(dir / "b.ckpt"));
    std::vector<Tensor> pa, pb;
    m.for_each_parameter([&](const std::string&, const Tensor& t) { pa.push_back(t); });
    ck.xnn->for_each_parameter([&](const std::string&, const Tensor& t) {
      pb.push_back(t);
      CHECK(t.requires_grad());
    });
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
  }
  SUBCASE("control") {
    ControlModel m = build_control(config());
    scramble(m, 3);
    const std::string a = encode_checkpoint(m, {{"0", "1", "2"}, std::nullopt});
    LoadedCheckpoint ck = decode_checkpoint(a);
    REQUIRE(ck.kind == ModelKind::control);
    CHECK_FALSE(ck.meta.standardization);
    CHECK(encode_checkpoint(*ck.control, ck.meta) == a);
    CHECK(ck.config().seed == 3);
  }
  SUBCASE("special values survive") {
    XnnModel m = build_xnn(config());
    m.head_fc2.bias[0] = -0.0;
    m.head_fc2.bias[1] = std::numeric_limits<double>::denorm_min();
    m.head_fc2.bias[2] = std::numeric_limits<double>::max();
    LoadedCheckpoint ck = decode_checkpoint(encode_checkpoint(m));
    CHECK(std::signbit(ck.xnn->head_fc2.bias[0]));
    CHECK(ck.xnn->head_fc2.bias[1] == std::numeric_limits<double>::denorm_min());
    CHECK(ck.xnn->head_fc2.bias[2] == std::numeric_limits<double>::max());
  }
}

TEST_CASE("corrupt checkpoints name the failing field") {
  XnnModel m = build_xnn(config());
  const std::string good = encode_checkpoint(m, {{"a", "b", "c"}, std::nullopt});
  auto [header, payload] = split_bytes(good);

  CHECK(expect_error_field(good.substr(0, good.size() - 5)) == "payload_bytes");
  CHECK(expect_error_field(good.substr(0, 20)) == "header");
  CHECK(expect_error_field("{not json\n") == "header");
  CHECK(expect_error_field("[1,2]\n") == "header");

  json h = header;
  h["format_version"] = 7;
  CHECK(expect_error_field(join(h, payload)) == "format_version");
  h = header;
  h["kind"] = "mystery";
  CHECK(expect_error_field(join(h, payload)) == "kind");
  h = header;
  h["config"]["heads"] = 3;
  CHECK(expect_error_field(join(h, payload)) == "config");
  h = header;
  h["config"].erase("d_model");
  CHECK(expect_error_field(join(h, payload)) == "config.d_model");
  h = header;
  h["parameters"][3]["name"] = "block0.fc1.typo";
  CHECK(expect_error_field(join(h, payload)) == "parameters[3].name");
  h = header;
  h["parameters"][2]["rows"] = 99;
  CHECK(expect_error_field(join(h, payload)) == "parameters[2].rows");
  h = header;
  h["parameters"][1]["offset"] = 0;
  CHECK(expect_error_field(join(h, payload)) == "parameters[1].offset");
  h = header;
  h["parameters"].erase(h["parameters"].size() - 1);
  CHECK(expect_error_field(join(h, payload)) == "parameters");
  h = header;
  h["class_names"] = 5;
  CHECK(expect_error_field(join(h, payload)) == "class_names");
  h = header;
  h["payload_bytes"] = -1;
  CHECK(expect_error_field(join(h, payload)) == "payload_bytes");
  CHECK(expect_error_field(good + "x") == "payload_bytes");

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/none.ckpt"), CheckpointError);
}
