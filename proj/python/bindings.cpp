#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>
#include <optional>
#include <sstream>

#include "xnn/checkpoint.hpp"
#include "xnn/cli.hpp"
#include "xnn/error.hpp"
#include "xnn/introspect.hpp"
#include "xnn/metrics.hpp"
#include "xnn/train.hpp"

namespace py = pybind11;
using namespace xnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Tensor(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const Labels& y) {
  if (y.ndim() != 1) throw ShapeError("labels must be 1-D");
  return {y.data(), y.data() + y.size()};
}

Dataset make_dataset(const Array& x, const Labels& y, std::size_t classes) {
  Dataset ds;
  ds.features = to_tensor(x);
  ds.labels = to_labels(y);
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back(std::to_string(c));
  ds.validate();
  return ds;
}

py::tuple dataset_tuple(const Dataset& ds) {
  return py::make_tuple(to_array(ds.features), py::array_t<int>(ds.labels.size(), ds.labels.data()),
                        ds.class_names);
}

py::dict eval_dict(const EvalResult& r) {
  py::dict d;
  d["samples"] = r.samples;
  d["loss"] = r.loss;
  d["macro_f1"] = r.macro_f1;
  d["accuracy"] = r.accuracy;
  d["auc"] = r.auc ? py::cast(*r.auc) : py::none();
  return d;
}

// A trained or freshly built x-NN or control model plus the input
// standardization fitted during `fit`.
class Model {
 public:
  Model(XnnConfig cfg, bool control) {
    cfg.validate();
    if (control)
      control_ = build_control(cfg);
    else
      xnn_ = build_xnn(cfg);
  }
  explicit Model(LoadedCheckpoint ck) : xnn_(std::move(ck.xnn)), control_(std::move(ck.control)) {
    meta_ = std::move(ck.meta);
  }

  const XnnConfig& config() const { return xnn_ ? xnn_->config : control_->config; }
  std::string kind() const { return xnn_ ? "xnn" : "control"; }
  std::size_t num_parameters() const { return xnn_ ? parameter_count(*xnn_) : parameter_count(*control_); }

  py::list fit(const Array& x, const Labels& y, const Array& x_val, const Labels& y_val, const TrainConfig& tc,
               bool standardize_inputs) {
    const std::size_t c = std::max<std::size_t>(config().num_classes, 2);
    Dataset train_set = make_dataset(x, y, c), val_set = make_dataset(x_val, y_val, c);
    if (standardize_inputs) {
      Standardized st = standardize(std::move(train_set), std::move(val_set));
      train_set = std::move(st.train);
      val_set = std::move(st.val);
      meta_.standardization = st.stats;
    } else {
      meta_.standardization.reset();
    }
    meta_.class_names = train_set.class_names;
    History h;
    {
      py::gil_scoped_release release;
      h = xnn_ ? train(*xnn_, train_set, val_set, tc) : train(*control_, train_set, val_set, tc);
    }
    py::list out;
    for (const auto& e : h.epochs) {
      py::dict d;
      d["epoch"] = e.epoch;
      d["train_loss"] = e.train_loss;
      d["val_loss"] = e.val_loss;
      d["macro_f1"] = e.macro_f1;
      d["accuracy"] = e.accuracy;
      d["auc"] = e.auc ? py::cast(*e.auc) : py::none();
      out.append(d);
    }
    return out;
  }

  py::tuple predict(const Array& x) const {
    Tensor t = prepare(x);
    Prediction p = xnn_ ? xnn::predict(*xnn_, t) : xnn::predict(*control_, t);
    return py::make_tuple(py::array_t<int>(p.classes.size(), p.classes.data()), to_array(p.probabilities));
  }

  py::dict evaluate(const Array& x, const Labels& y) const {
    Dataset ds = make_dataset(x, y, std::max<std::size_t>(config().num_classes, 2));
    if (meta_.standardization) apply_standardization(ds.features, *meta_.standardization);
    return eval_dict(xnn_ ? xnn::evaluate(*xnn_, ds) : xnn::evaluate(*control_, ds));
  }

  py::dict attention(const Array& x) const {
    if (!xnn_) throw ConfigError("attention maps need an x-NN model, not a control model");
    AttentionReport r = attention_report(*xnn_, prepare(x));
    const std::size_t h = r.per_head.size(), k = h ? r.per_head[0].rows() : 0;
    py::array_t<double> maps({h, k, k});
    for (std::size_t i = 0; i < h; ++i)
      std::copy(r.per_head[i].data().begin(), r.per_head[i].data().end(), maps.mutable_data() + i * k * k);
    py::dict d;
    d["per_head"] = maps;
    d["stress"] = r.stress;
    d["head_similarity"] = to_array(head_similarity(r));
    d["samples"] = r.n_samples;
    return d;
  }

  void save(const std::string& path) const {
    if (xnn_)
      save_checkpoint(path, *xnn_, meta_);
    else
      save_checkpoint(path, *control_, meta_);
  }

  py::dict parameters() const {
    py::dict d;
    auto put = [&](const std::string& name, const Tensor& t) { d[py::str(name)] = to_array(t); };
    if (xnn_)
      xnn_->for_each_parameter(put);
    else
      control_->for_each_parameter(put);
    return d;
  }

 private:
  Tensor prepare(const Array& x) const {
    Tensor t = to_tensor(x);
    if (meta_.standardization) apply_standardization(t, *meta_.standardization);
    return t;
  }

  std::optional<XnnModel> xnn_;
  std::optional<ControlModel> control_;
  CheckpointMeta meta_;
};

XnnConfig make_config(std::size_t input_dim, std::size_t num_classes, std::size_t num_blocks,
                      std::size_t base_width, std::size_t sublayers_per_block, std::size_t d_model,
                      std::size_t heads, std::size_t head_hidden, double leaky_alpha, std::uint64_t seed) {
  XnnConfig c;
  c.input_dim = input_dim;
  c.num_classes = num_classes;
  c.num_blocks = num_blocks;
  c.base_width = base_width;
  c.sublayers_per_block = sublayers_per_block;
  c.d_model = d_model;
  c.heads = heads;
  c.head_hidden = head_hidden;
  c.leaky_alpha = leaky_alpha;
  c.seed = seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_xnn, m) {
  m.doc() = "Layer-stress attention classifier (C++ core).";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](std::size_t epochs, std::size_t batch_size, double learning_rate,
                       const std::string& optimizer, double beta1, double beta2, double eps, std::uint64_t seed,
                       bool shuffle) {
             TrainConfig c;
             c.epochs = epochs;
             c.batch_size = batch_size;
             c.learning_rate = learning_rate;
             c.optimizer = parse_optimizer(optimizer);
             c.adam_beta1 = beta1;
             c.adam_beta2 = beta2;
             c.adam_eps = eps;
             c.seed = seed;
             c.shuffle = shuffle;
             c.validate();
             return c;
           }),
           py::arg("epochs") = 100, py::arg("batch_size") = 32, py::arg("learning_rate") = 1e-3,
           py::arg("optimizer") = "adam", py::arg("adam_beta1") = 0.9, py::arg("adam_beta2") = 0.999,
           py::arg("adam_eps") = 1e-8, py::arg("seed") = 0, py::arg("shuffle") = true)
      .def_readonly("epochs", &TrainConfig::epochs)
      .def_readonly("batch_size", &TrainConfig::batch_size)
      .def_readonly("learning_rate", &TrainConfig::learning_rate)
      .def_readonly("seed", &TrainConfig::seed)
      .def_property_readonly("optimizer", [](const TrainConfig& c) { return to_string(c.optimizer); });

  py::class_<Model>(m, "Model")
      .def(py::init([](std::size_t input_dim, std::size_t num_classes, std::size_t num_blocks,
                       std::size_t base_width, std::size_t sublayers_per_block, std::size_t d_model,
                       std::size_t heads, std::size_t head_hidden, double leaky_alpha, std::uint64_t seed,
                       const std::string& kind) {
             if (kind != "xnn" && kind != "control") throw ConfigError("kind must be 'xnn' or 'control'");
             return Model(make_config(input_dim, num_classes, num_blocks, base_width, sublayers_per_block, d_model,
                                      heads, head_hidden, leaky_alpha, seed),
                          kind == "control");
           }),
           py::arg("input_dim"), py::arg("num_classes") = 2, py::arg("num_blocks") = 3, py::arg("base_width") = 64,
           py::arg("sublayers_per_block") = 3, py::arg("d_model") = 64, py::arg("heads") = 8,
           py::arg("head_hidden") = 0, py::arg("leaky_alpha") = 0.01, py::arg("seed") = 0,
           py::arg("kind") = "xnn")
      .def_static("load", [](const std::string& path) { return Model(load_checkpoint(path)); }, py::arg("path"))
      .def_property_readonly("kind", &Model::kind)
      .def_property_readonly("num_parameters", &Model::num_parameters)
      .def_property_readonly("num_classes", [](const Model& self) { return self.config().num_classes; })
      .def_property_readonly("input_dim", [](const Model& self) { return self.config().input_dim; })
      .def_property_readonly("num_blocks", [](const Model& self) { return self.config().num_blocks; })
      .def_property_readonly("heads", [](const Model& self) { return self.config().heads; })
      .def("fit", &Model::fit, py::arg("x"), py::arg("y"), py::arg("x_val"), py::arg("y_val"),
           py::arg("config") = TrainConfig{}, py::arg("standardize") = true)
      .def("predict", &Model::predict, py::arg("x"), "Returns (classes, probabilities).")
      .def("evaluate", &Model::evaluate, py::arg("x"), py::arg("y"))
      .def("attention", &Model::attention, py::arg("x"))
      .def("parameters", &Model::parameters)
      .def("save", &Model::save, py::arg("path"));

  m.def("synth_shallow", [](std::size_t n, std::size_t dim, std::uint64_t seed) {
    return dataset_tuple(synth_shallow(n, dim, seed));
  }, py::arg("n"), py::arg("dim"), py::arg("seed") = 0);
  m.def("synth_deep", [](std::size_t n, std::size_t dim, std::uint64_t seed) {
    return dataset_tuple(synth_deep(n, dim, seed));
  }, py::arg("n"), py::arg("dim"), py::arg("seed") = 0);
  m.def("load_csv", [](const std::string& path, const std::string& label_column, bool has_header) {
    CsvOptions o;
    o.label_column = label_column;
    o.has_header = has_header;
    return dataset_tuple(load_csv(path, o));
  }, py::arg("path"), py::arg("label_column") = "label", py::arg("has_header") = true);

  m.def("split", [](const Array& x, const Labels& y, double train_fraction, std::uint64_t seed) {
    Dataset ds;
    ds.features = to_tensor(x);
    ds.labels = to_labels(y);
    int top = 0;
    for (int v : ds.labels) top = std::max(top, v);
    for (int c = 0; c <= top; ++c) ds.class_names.push_back(std::to_string(c));
    Split s = split(ds, train_fraction, seed);
    auto labels = [](const Dataset& d) { return py::array_t<int>(d.labels.size(), d.labels.data()); };
    return py::make_tuple(to_array(s.train.features), labels(s.train), to_array(s.val.features), labels(s.val));
  }, py::arg("x"), py::arg("y"), py::arg("train_fraction") = 0.8, py::arg("seed") = 0,
     "Seeded split identical to the command-line tool; returns (x_train, y_train, x_val, y_val).");

  m.def("macro_f1", [](const Labels& pred, const Labels& truth, std::size_t c) {
    return macro_f1(to_labels(pred), to_labels(truth), c);
  }, py::arg("pred"), py::arg("truth"), py::arg("num_classes"));
  m.def("auc", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores, const Labels& truth) {
    if (scores.ndim() != 1) throw ShapeError("scores must be 1-D");
    std::vector<double> s(scores.data(), scores.data() + scores.size());
    return auc(s, to_labels(truth));
  }, py::arg("scores"), py::arg("truth"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs one command; returns (exit_code, stdout, stderr).");
}
