#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "xnn/error.hpp"
#include "xnn/train.hpp"

using namespace xnn;

namespace {

XnnConfig small_config(std::size_t input_dim, std::size_t classes, std::uint64_t seed) {
  XnnConfig c;
  c.input_dim = input_dim;
  c.base_width = 16;
  c.d_model = 8;
  c.heads = 2;
  c.num_classes = classes;
  c.seed = seed;
  return c;
}

// Two well separated Gaussian blobs.
Dataset blobs(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.features = Tensor(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    ds.labels.push_back(y);
    for (std::size_t j = 0; j < dim; ++j) ds.features(i, j) = rng.normal() * 0.5 + (y ? 2.0 : -2.0);
  }
  ds.class_names = {"0", "1"};
  return ds;
}

std::vector<Tensor> snapshot(const XnnModel& m) {
  std::vector<Tensor> out;
  m.for_each_parameter([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

Dataset random_labels(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.features = Tensor(n, dim);
  for (double& v : ds.features.data()) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(rng.below(classes)));
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back(std::to_string(c));
  return ds;
}

}  // namespace

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.learning_rate = std::nan("");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_optimizer("sgd") == Optimizer::sgd);
  CHECK(to_string(Optimizer::adam) == "adam");
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("sgd_step") {
  Tensor w(1, 1, 1.0);
  w.set_requires_grad(true);
  w.grad()[0] = 2.0;
  Tensor* ps[] = {&w};
  sgd_step(ps, 0.1);
  CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-15));

  SUBCASE("change equals -lr * grad exactly") {
    Rng rng(1);
    Tensor p = xnn::testing::random_tensor(3, 3, rng);
    p.set_requires_grad(true);
    for (double& g : p.grad()) g = rng.normal();
    const Tensor before = p;
    Tensor* q[] = {&p};
    sgd_step(q, 0.01);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == before[i] - 0.01 * p.grad()[i]);
  }
}

TEST_CASE("adam_step") {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  for (double g : {1e-6, -0.5, 3.0, 1e4}) {
    Tensor w(1, 1, 0.0);
    w.set_requires_grad(true);
    w.grad()[0] = g;
    AdamState st;
    Tensor* ps[] = {&w};
    adam_step(ps, st, cfg);
    // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
    const double expected = -cfg.learning_rate * g / (std::abs(g) + cfg.adam_eps);
    CHECK(w[0] == doctest::Approx(expected).epsilon(1e-12));
    if (std::abs(g) >= 1e-3) CHECK(std::abs(std::abs(w[0]) - cfg.learning_rate) < 1e-3 * cfg.learning_rate);
  }
  SUBCASE("zero gradient gives zero update at step 1") {
    Tensor w(2, 2, 0.5);
    w.set_requires_grad(true);
    w.zero_grad();
    AdamState st;
    Tensor* ps[] = {&w};
    adam_step(ps, st, cfg);
    for (double v : w.data()) CHECK(v == 0.5);
    CHECK(st.step == 1);
  }
  SUBCASE("second step follows the bias-corrected recurrence") {
    Tensor w(1, 1, 0.0);
    w.set_requires_grad(true);
    AdamState st;
    Tensor* ps[] = {&w};
    w.grad()[0] = 1.0;
    adam_step(ps, st, cfg);
    w.grad()[0] = -2.0;
    adam_step(ps, st, cfg);
    const double m = 0.9 * 0.1 * 1.0 + 0.1 * -2.0, v = 0.999 * 0.001 * 1.0 + 0.001 * 4.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double expected = -1e-3 * 1.0 / (1.0 + 1e-8) - 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("classification_loss picks BCE for one column") {
  Tape t;
  std::vector<int> y{1};
  CHECK(classification_loss(t.constant(Tensor(1, 1)), y).value()[0] == doctest::Approx(std::log(2.0)));
  CHECK(classification_loss(t.constant(Tensor(1, 4)), y).value()[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("history csv") {
  History h;
  h.epochs.push_back({1, 0.5, 0.25, 0.75, 0.8, 0.9, 0.0});
  h.epochs.push_back({2, 0.125, 0.1, 1.0, 1.0, std::nullopt, 0.0});
  CHECK(history_csv(h) == "epoch,train_loss,val_loss,macro_f1,auc\n1,0.5,0.25,0.75,0.9\n2,0.125,0.1,1,\n");
}

TEST_CASE("train on separable blobs") {
  Dataset ds = blobs(200, 10, 3);
  Split s = split(ds, 0.8, 1);
  XnnModel m = build_xnn(small_config(10, 2, 1));
  TrainConfig cfg;
  cfg.epochs = 50;
  std::size_t calls = 0;
  History h = train(m, s.train, s.val, cfg, [&](const EpochRecord& r) { CHECK(r.epoch == ++calls); });
  CHECK(h.epochs.size() == 50);
  CHECK(calls == 50);
  CHECK(h.epochs.back().macro_f1 >= 0.95);
  for (const auto& r : h.epochs) {
    CHECK(std::isfinite(r.train_loss));
    CHECK(std::isfinite(r.val_loss));
    CHECK(r.auc.has_value());
  }
  m.for_each_parameter([](const std::string&, const Tensor& t) { CHECK_FALSE(t.has_grad()); });
}

TEST_CASE("learning rate 0 leaves parameters bitwise unchanged") {
  Dataset ds = blobs(40, 10, 2);
  XnnModel m = build_xnn(small_config(10, 2, 4));
  const auto before = snapshot(m);
  for (Optimizer opt : {Optimizer::adam, Optimizer::sgd}) {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.0;
    cfg.optimizer = opt;
    train(m, ds, ds, cfg);
  }
  const auto after = snapshot(m);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("training is deterministic") {
  Dataset ds = random_labels(60, 10, 3, 5);
  Split s = split(ds, 0.8, 0);
  auto run = [&] {
    XnnModel m = build_xnn(small_config(10, 3, 2));
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 7;  // leaves a partial batch
    cfg.seed = 9;
    History h = train(m, s.train, s.val, cfg);
    return std::pair{history_csv(h), snapshot(m)};
  };
  auto [ha, pa] = run();
  auto [hb, pb] = run();
  CHECK(ha == hb);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("train rejects incompatible data") {
  XnnModel m = build_xnn(small_config(10, 2, 0));
  TrainConfig cfg;
  cfg.epochs = 1;
  Dataset wrong_width = blobs(20, 9, 0);
  CHECK_THROWS_AS(train(m, wrong_width, wrong_width, cfg), DataError);
  Dataset three = random_labels(20, 10, 3, 0);
  CHECK_THROWS_AS(train(m, three, three, cfg), DataError);
  Dataset ok = blobs(20, 10, 0);
  Dataset empty = ok.subset(std::vector<std::size_t>{});
  CHECK_THROWS_AS(train(m, ok, empty, cfg), DataError);
}

TEST_CASE("non-finite loss reports epoch and batch") {
  XnnModel m = build_xnn(small_config(10, 2, 0));
  m.head_fc2.bias[0] = std::numeric_limits<double>::infinity();
  Dataset ds = blobs(20, 10, 0);
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(m, ds, ds, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

TEST_CASE("evaluate") {
  SUBCASE("untrained 3-class model with near-zero logits is near ln 3, without AUC") {
    XnnModel m = build_xnn(small_config(10, 3, 0));
    for (double& w : m.head_fc2.weight.data()) w *= 0.01;
    Dataset ds = random_labels(100, 10, 3, 1);
    EvalResult r = evaluate(m, ds);
    CHECK(std::abs(r.loss - std::log(3.0)) < 0.1);
    CHECK_FALSE(r.auc.has_value());
    CHECK(r.samples == 100);
  }
  SUBCASE("pure and repeatable; batch size does not matter") {
    XnnModel m = build_xnn(small_config(10, 2, 3));
    Dataset ds = blobs(50, 10, 1);
    const auto before = snapshot(m);
    EvalResult a = evaluate(m, ds), b = evaluate(m, ds), c = evaluate(m, ds, 7);
    CHECK(a.loss == b.loss);
    CHECK(a.macro_f1 == b.macro_f1);
    CHECK(*a.auc == *b.auc);
    CHECK(a.loss == doctest::Approx(c.loss).epsilon(1e-14));
    const auto after = snapshot(m);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  }
  SUBCASE("single-logit head") {
    XnnModel m = build_xnn(small_config(10, 1, 3));
    Dataset ds = blobs(30, 10, 1);
    EvalResult r = evaluate(m, ds);
    CHECK(r.auc.has_value());
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 8;
    History h = train(m, ds, ds, cfg);
    CHECK(h.epochs.back().accuracy >= 0.9);
    CHECK(h.epochs.back().train_loss < h.epochs.front().train_loss);
  }
  SUBCASE("errors") {
    XnnModel m = build_xnn(small_config(10, 2, 3));
    Dataset ds = blobs(30, 10, 1);
    CHECK_THROWS_AS(evaluate(m, ds.subset(std::vector<std::size_t>{})), DataError);
  }
  SUBCASE("compare") {
    EvalResult base, cand;
    base.loss = 0.1506;
    cand.loss = 0.1402;
    base.accuracy = 0.5;
    cand.accuracy = 0.6;
    EvalDelta d = compare(base, cand);
    CHECK(d.loss_abs == doctest::Approx(-0.0104));
    CHECK(d.loss_rel == doctest::Approx(-0.0104 / 0.1506));
    CHECK(d.accuracy_rel == doctest::Approx(0.2));
  }
}

TEST_CASE("control model trains through the same loop") {
  Dataset ds = blobs(80, 10, 7);
  ControlModel m = build_control(small_config(10, 2, 1));
  TrainConfig cfg;
  cfg.epochs = 20;
  History h = train(m, ds, ds, cfg);
  CHECK(h.epochs.back().accuracy >= 0.95);
}

TEST_CASE("tiny-dataset training loss decreases for most seeds") {
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Dataset ds = random_labels(16, 10, 3, 100 + seed);
    XnnModel m = build_xnn(small_config(10, 3, seed));
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    cfg.seed = seed;
    History h = train(m, ds, ds, cfg);
    decreased += h.epochs.back().train_loss < h.epochs.front().train_loss;
  }
  CHECK(decreased >= 4);
}
