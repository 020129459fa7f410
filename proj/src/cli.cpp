#include "xnn/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "format.hpp"
#include "json.hpp"
#include "xnn/checkpoint.hpp"
#include "xnn/data.hpp"
#include "xnn/error.hpp"
#include "xnn/introspect.hpp"

namespace xnn::cli {

namespace fs = std::filesystem;
using detail::format_double;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment config

namespace {

template <class T>
void read_field(const json& doc, const char* key, T& dst) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError("");
    } else {
      if (!v.is_string()) throw ConfigError("");
    }
    dst = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  static const std::set<std::string> known = {
      "input_dim",   "num_blocks",   "base_width", "sublayers_per_block", "d_model",     "heads",
      "num_classes", "head_hidden",  "leaky_alpha", "seed",               "epochs",      "batch_size",
      "learning_rate", "optimizer",  "adam_betas", "adam_eps",            "train_seed",  "shuffle",
      "data",        "label_column", "has_header", "train_fraction",      "split_seed",  "standardize",
      "with_control", "output_dir"};
  for (const auto& [key, _] : doc.items())
    if (!known.count(key)) throw ConfigError("unknown config field '" + key + "'");

  ExperimentConfig c;
  read_field(doc, "input_dim", c.model.input_dim);
  read_field(doc, "num_blocks", c.model.num_blocks);
  read_field(doc, "base_width", c.model.base_width);
  read_field(doc, "sublayers_per_block", c.model.sublayers_per_block);
  read_field(doc, "d_model", c.model.d_model);
  read_field(doc, "heads", c.model.heads);
  read_field(doc, "num_classes", c.model.num_classes);
  c.model.num_classes = doc.contains("num_classes") ? c.model.num_classes : 0;
  read_field(doc, "head_hidden", c.model.head_hidden);
  read_field(doc, "leaky_alpha", c.model.leaky_alpha);
  read_field(doc, "seed", c.model.seed);
  read_field(doc, "epochs", c.train.epochs);
  read_field(doc, "batch_size", c.train.batch_size);
  read_field(doc, "learning_rate", c.train.learning_rate);
  std::string opt = to_string(c.train.optimizer);
  read_field(doc, "optimizer", opt);
  c.train.optimizer = parse_optimizer(opt);
  if (doc.contains("adam_betas")) {
    const json& b = doc["adam_betas"];
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
      throw ConfigError("config field 'adam_betas' must be a two-number array");
    c.train.adam_beta1 = b[0].get<double>();
    c.train.adam_beta2 = b[1].get<double>();
  }
  read_field(doc, "adam_eps", c.train.adam_eps);
  read_field(doc, "train_seed", c.train.seed);
  read_field(doc, "shuffle", c.train.shuffle);
  read_field(doc, "data", c.data);
  read_field(doc, "label_column", c.label_column);
  read_field(doc, "has_header", c.has_header);
  read_field(doc, "train_fraction", c.train_fraction);
  read_field(doc, "split_seed", c.split_seed);
  read_field(doc, "standardize", c.standardize);
  read_field(doc, "with_control", c.with_control);
  read_field(doc, "output_dir", c.output_dir);
  return c;
}

std::string experiment_config_json(const ExperimentConfig& c) {
  json doc{{"input_dim", c.model.input_dim},
           {"num_blocks", c.model.num_blocks},
           {"base_width", c.model.base_width},
           {"sublayers_per_block", c.model.sublayers_per_block},
           {"d_model", c.model.d_model},
           {"heads", c.model.heads},
           {"num_classes", c.model.num_classes},
           {"head_hidden", c.model.head_hidden},
           {"leaky_alpha", c.model.leaky_alpha},
           {"seed", c.model.seed},
           {"epochs", c.train.epochs},
           {"batch_size", c.train.batch_size},
           {"learning_rate", c.train.learning_rate},
           {"optimizer", to_string(c.train.optimizer)},
           {"adam_betas", {c.train.adam_beta1, c.train.adam_beta2}},
           {"adam_eps", c.train.adam_eps},
           {"train_seed", c.train.seed},
           {"shuffle", c.train.shuffle},
           {"data", c.data},
           {"label_column", c.label_column},
           {"has_header", c.has_header},
           {"train_fraction", c.train_fraction},
           {"split_seed", c.split_seed},
           {"standardize", c.standardize},
           {"with_control", c.with_control},
           {"output_dir", c.output_dir}};
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

constexpr const char* kCurvesScript = R"(#!/usr/bin/env python3
"""Plot loss / macro-F1 / AUC curves from history_*.csv in this directory."""
import csv, glob, os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
runs = {}
for path in sorted(glob.glob(os.path.join(here, "history_*.csv"))):
    name = os.path.basename(path)[len("history_"):-len(".csv")]
    with open(path) as f:
        runs[name] = list(csv.DictReader(f))

metrics = [("train_loss", "train loss"), ("val_loss", "validation loss"), ("macro_f1", "macro F1"), ("auc", "AUC")]
fig, axes = plt.subplots(1, len(metrics), figsize=(5 * len(metrics), 4))
for ax, (key, label) in zip(axes, metrics):
    for name, rows in runs.items():
        pts = [(int(r["epoch"]), float(r[key])) for r in rows if r[key] != ""]
        if pts:
            ax.plot(*zip(*pts), label=name)
    ax.set_xlabel("epoch")
    ax.set_title(label)
    ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "curves.png"), dpi=120)
)";

constexpr const char* kHeatmapScript = R"(#!/usr/bin/env python3
"""Render head_*.csv attention maps (rows: receptors, columns: donors)."""
import glob, os
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
paths = sorted(glob.glob(os.path.join(here, "head_*.csv")), key=lambda p: int(p.rsplit("_", 1)[1][:-4]))
maps = [np.loadtxt(p, delimiter=",", ndmin=2) for p in paths]
cols = min(4, len(maps))
rows = (len(maps) + cols - 1) // cols
fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)
for i, ax in enumerate(axes.flat):
    if i >= len(maps):
        ax.axis("off")
        continue
    ax.imshow(maps[i], vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_title(f"head {i}")
    ax.set_xlabel("donor layer")
    ax.set_ylabel("receptor layer")
fig.tight_layout()
fig.savefig(os.path.join(here, "heatmaps.png"), dpi=120)
)";

void print_metrics(std::ostream& out, const std::string& prefix, const EvalResult& r) {
  out << prefix << "loss=" << format_double(r.loss) << '\n';
  out << prefix << "macro_f1=" << format_double(r.macro_f1) << '\n';
  out << prefix << "accuracy=" << format_double(r.accuracy) << '\n';
  if (r.auc) out << prefix << "auc=" << format_double(*r.auc) << '\n';
}

std::uint64_t parse_seed_env(const char* raw) {
  std::uint64_t v = 0;
  std::string s(raw);
  std::size_t pos = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != s.size()) throw ConfigError("XNN_SEED must be a non-negative integer, got '" + s + "'");
  return v;
}

struct SynthArgs {
  std::string kind;
  std::size_t n = 1000;
  std::size_t dim = 32;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.kind != "shallow" && a.kind != "deep") throw ConfigError("synth kind must be 'shallow' or 'deep'");
  Dataset ds = a.kind == "shallow" ? synth_shallow(a.n, a.dim, a.seed) : synth_deep(a.n, a.dim, a.seed);
  save_csv(ds, a.out);
  out << "wrote " << ds.size() << " samples x " << ds.width() << " features to " << a.out << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string label_column;
  bool with_control = false;
  bool emit_plot_script = false;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = parse_experiment_config(read_text(a.config));
  } else {
    cfg.model.num_classes = 0;
  }
  if (const char* env = std::getenv("XNN_SEED")) {
    const std::uint64_t s = parse_seed_env(env);
    cfg.model.seed = cfg.train.seed = cfg.split_seed = s;
  }
  if (!a.data.empty()) cfg.data = a.data;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (!a.label_column.empty()) cfg.label_column = a.label_column;
  if (a.with_control) cfg.with_control = true;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  if (a.learning_rate) cfg.train.learning_rate = *a.learning_rate;
  if (a.seed) cfg.model.seed = cfg.train.seed = cfg.split_seed = *a.seed;

  if (cfg.data.empty()) throw ConfigError("no data file given (config field 'data' or --data)");
  if (!fs::exists(cfg.data)) throw ConfigError("data file " + cfg.data + " does not exist");
  cfg.train.validate();
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  {
    // Structural checks that do not depend on the data.
    XnnConfig probe = cfg.model;
    probe.input_dim = std::max<std::size_t>(probe.input_dim, 1);
    probe.num_classes = std::max<std::size_t>(probe.num_classes, 1);
    probe.validate();
  }

  Dataset ds = load_csv(cfg.data, {cfg.label_column, cfg.has_header, {}});
  if (cfg.model.input_dim != 0 && cfg.model.input_dim != ds.width())
    throw DataError("config input_dim " + std::to_string(cfg.model.input_dim) + " but data has " +
                    std::to_string(ds.width()) + " features");
  cfg.model.input_dim = ds.width();
  if (cfg.model.num_classes == 0) cfg.model.num_classes = ds.num_classes();
  if (cfg.model.num_classes == 1 && ds.num_classes() > 2)
    throw DataError("a single-logit head needs binary labels, data has " + std::to_string(ds.num_classes()) +
                    " classes");
  if (cfg.model.num_classes != 1 && cfg.model.num_classes < ds.num_classes())
    throw DataError("num_classes " + std::to_string(cfg.model.num_classes) + " but data has " +
                    std::to_string(ds.num_classes()) + " classes");
  cfg.model.validate();

  Split parts = split(ds, cfg.train_fraction, cfg.split_seed);
  ds = Dataset{};
  const fs::path dir = cfg.output_dir;
  make_dir(dir);
  save_csv(parts.val, dir / "val.csv");

  Dataset train_set, val_set;
  CheckpointMeta meta;
  meta.class_names = parts.train.class_names;
  if (cfg.standardize) {
    auto st = standardize(std::move(parts.train), std::move(parts.val));
    meta.standardization = st.stats;
    train_set = std::move(st.train);
    val_set = std::move(st.val);
  } else {
    train_set = std::move(parts.train);
    val_set = std::move(parts.val);
  }
  write_text(dir / "config.json", experiment_config_json(cfg));

  XnnModel xnn = build_xnn(cfg.model);
  History hx = train(xnn, train_set, val_set, cfg.train);
  save_checkpoint(dir / "xnn.ckpt", xnn, meta);
  write_history_csv(hx, dir / "history_xnn.csv");
  const EvalResult ex = evaluate(xnn, val_set);
  out << "samples.train=" << train_set.size() << "\nsamples.val=" << val_set.size() << '\n';
  print_metrics(out, "xnn.", ex);

  if (cfg.with_control) {
    ControlModel control = build_control(cfg.model);
    History hc = train(control, train_set, val_set, cfg.train);
    save_checkpoint(dir / "control.ckpt", control, meta);
    write_history_csv(hc, dir / "history_control.csv");
    const EvalResult ec = evaluate(control, val_set);
    print_metrics(out, "control.", ec);
    const EvalDelta d = compare(ec, ex);
    out << "delta.loss_abs=" << format_double(d.loss_abs) << '\n'
        << "delta.loss_rel=" << format_double(d.loss_rel) << '\n'
        << "delta.macro_f1_abs=" << format_double(d.macro_f1_abs) << '\n'
        << "delta.accuracy_abs=" << format_double(d.accuracy_abs) << '\n'
        << "delta.accuracy_rel=" << format_double(d.accuracy_rel) << '\n';
  }
  if (a.emit_plot_script) write_text(dir / "plot_curves.py", kCurvesScript);
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string label_column = "label";
  bool no_header = false;
  std::string out;
  bool emit_plot_script = false;
};

Dataset load_for_checkpoint(const LoadedCheckpoint& ck, const EvalArgs& a) {
  CsvOptions opts{a.label_column, !a.no_header, ck.meta.class_names};
  Dataset ds = load_csv(a.data, opts);
  const XnnConfig& cfg = ck.config();
  if (ds.width() != cfg.input_dim)
    throw DataError("data has " + std::to_string(ds.width()) + " features, checkpoint expects " +
                    std::to_string(cfg.input_dim));
  if (ck.meta.standardization) {
    apply_standardization(ds.features, *ck.meta.standardization);
    ds.standardization = ck.meta.standardization;
  }
  return ds;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  Dataset ds = load_for_checkpoint(ck, a);
  const EvalResult r = ck.xnn ? evaluate(*ck.xnn, ds) : evaluate(*ck.control, ds);
  out << "samples=" << r.samples << '\n';
  print_metrics(out, "", r);
  return kOk;
}

int cmd_attn(const EvalArgs& a, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  if (!ck.xnn) throw ConfigError("attn needs an x-NN checkpoint; " + a.checkpoint + " holds a control model");
  Dataset ds = load_for_checkpoint(ck, a);
  AttentionReport report = attention_report(*ck.xnn, ds);
  export_heatmaps(report, a.out);
  if (a.emit_plot_script) write_text(fs::path(a.out) / "plot_heatmaps.py", kHeatmapScript);
  out << "samples=" << report.n_samples << '\n';
  for (std::size_t j = 0; j < report.stress.size(); ++j)
    out << "stress.layer_" << j << '=' << format_double(report.stress[j]) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"x-NN: layer-stress classifier with attention over depth"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset as CSV");
  synth->add_option("kind", synth_args.kind, "shallow or deep")->required()->check(CLI::IsMember({"shallow", "deep"}));
  synth->add_option("--n", synth_args.n, "number of samples (>= 4)");
  synth->add_option("--dim", synth_args.dim, "number of features");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--out", synth_args.out, "output CSV path")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train the x-NN model (and optionally the control)");
  train_cmd->add_option("--config", train_args.config, "experiment JSON");
  train_cmd->add_option("--data", train_args.data, "CSV file (overrides config)");
  train_cmd->add_option("--out", train_args.out, "output directory (overrides config)");
  train_cmd->add_option("--label-column", train_args.label_column, "label column (overrides config)");
  train_cmd->add_flag("--with-control", train_args.with_control, "also train the last-layer control model");
  train_cmd->add_flag("--emit-plot-script", train_args.emit_plot_script, "write plot_curves.py next to the CSVs");
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--batch-size", train_args.batch_size);
  train_cmd->add_option("--learning-rate", train_args.learning_rate);
  train_cmd->add_option("--seed", train_args.seed, "sets model, shuffle and split seeds");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a CSV file");
  EvalArgs attn_args;
  auto* attn_cmd = app.add_subcommand("attn", "export per-head attention heatmaps and stress scores");
  for (auto [cmd, a] : {std::pair{eval_cmd, &eval_args}, std::pair{attn_cmd, &attn_args}}) {
    cmd->add_option("--checkpoint", a->checkpoint)->required();
    cmd->add_option("--data", a->data)->required();
    cmd->add_option("--label-column", a->label_column, "label column name, or index with --no-header");
    cmd->add_flag("--no-header", a->no_header, "the CSV has no header row");
  }
  attn_cmd->add_option("--out", attn_args.out, "output directory")->required();
  attn_cmd->add_flag("--emit-plot-script", attn_args.emit_plot_script, "write plot_heatmaps.py next to the CSVs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args, out);
    if (train_cmd->parsed()) return cmd_train(train_args, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out);
    if (attn_cmd->parsed()) return cmd_attn(attn_args, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace xnn::cli
