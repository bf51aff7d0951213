#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "glymph/grad_check.hpp"
#include "glymph/rng.hpp"
#include "glymph/trainer.hpp"

using namespace glymph;

namespace {

template <typename S>
Dataset<S> random_dataset(int n, int channels, int size, std::uint64_t seed,
                          const std::string& split) {
  Rng rng(seed);
  Dataset<S> ds;
  ds.split = split;
  for (int i = 0; i < n; ++i) {
    Sample<S> s;
    s.subject_id = "s" + std::to_string(i);
    s.input = Tensor<S>({channels, size, size});
    s.target = Tensor<S>({2, size, size});
    for (Eigen::Index t = 0; t < s.input.size(); ++t)
      s.input[t] = static_cast<S>(rng.uniform01());
    for (Eigen::Index t = 0; t < s.target.size(); ++t)
      s.target[t] = static_cast<S>(rng.uniform01());
    s.input_times = {0.0};
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

} // namespace

TEST_CASE("loss values match the stated examples") {
  Tensor<double> a({1, 2}, {0.0, 1.0}), b({1, 2}, {0.0, 0.0});
  CHECK(loss(a, a, LossKind::L2).value == 0.0);
  CHECK(loss(a, a, LossKind::L1).value == 0.0);
  CHECK(loss(a, b, LossKind::L2).value == doctest::Approx(0.5));
  CHECK(loss(a, b, LossKind::L1).value == doctest::Approx(0.5));

  Tensor<double> h({1}, {0.5}), z({1}, {0.0});
  CHECK(loss(h, z, LossKind::L2).value == doctest::Approx(0.25));
  CHECK(loss(h, z, LossKind::L1).value == doctest::Approx(0.5));

  Tensor<double> wrong({2, 1});
  CHECK_THROWS_AS(loss(a, wrong, LossKind::L2), Error);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(5);
  Tensor<double> pred({2, 3, 3}), target({2, 3, 3});
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    pred[i] = rng.normal();
    target[i] = rng.normal(); // equality has probability zero, kink avoided
  }
  for (LossKind kind : {LossKind::L2, LossKind::L1}) {
    auto f = [&]() { return loss(pred, target, kind).value; };
    pred.ensure_grad() = loss(pred, target, kind).grad.values();
    CHECK(max_relative_grad_error(f, pred, 1e-7) < 1e-4);
    pred.drop_grad();
  }
}

TEST_CASE("the L1 subgradient at exact equality is zero") {
  Tensor<double> x({2}, {0.5, -0.25});
  LossValue<double> l = loss(x, x, LossKind::L1);
  CHECK(l.grad[0] == 0.0);
  CHECK(l.grad[1] == 0.0);
}

TEST_CASE("the batch objective equals the mean of per-sample losses") {
  UNetConfig cfg{2, 2, 2, 1, 3, 1024};
  UNet<double> model(cfg);
  Dataset<double> ds = random_dataset<double>(5, 2, 8, 7, "test");
  const double batched = evaluate_loss(model, ds, LossKind::L2, 5);

  double per_sample = 0.0;
  for (auto& s : ds.samples) {
    Dataset<double> one;
    one.samples.push_back(s);
    per_sample += evaluate_loss(model, one, LossKind::L2, 1);
  }
  per_sample /= static_cast<double>(ds.size());
  CHECK(batched == doctest::Approx(per_sample).epsilon(1e-12));
}

TEST_CASE("training with learning rate zero leaves parameters bit-identical") {
  UNetConfig cfg{2, 2, 2, 1, 11, 1024};
  UNet<float> model(cfg);
  std::vector<Tensor<float>> before;
  for (auto& p : model.trainable_params()) before.push_back(*p.tensor);

  Dataset<float> train_ds = random_dataset<float>(4, 2, 8, 13, "train");
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.learning_rate = 0.0;
  // learning_rate must be positive through the config schema; the trainer
  // itself accepts zero for this invariance check
  train(model, train_ds, Dataset<float>{}, tc);

  auto after = model.trainable_params();
  for (std::size_t i = 0; i < after.size(); ++i)
    for (Eigen::Index t = 0; t < after[i].tensor->size(); ++t)
      CHECK((*after[i].tensor)[t] == before[i][t]);
}

TEST_CASE("identical seeds give bit-identical loss curves and weights") {
  auto run = [&]() {
    UNetConfig cfg{2, 2, 2, 1, 5, 1024};
    UNet<float> model(cfg);
    Dataset<float> train_ds = random_dataset<float>(6, 2, 8, 21, "train");
    Dataset<float> test_ds = random_dataset<float>(2, 2, 8, 22, "test");
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 4;
    tc.seed = 31;
    LossCurve c = train(model, train_ds, test_ds, tc);
    Tensor<float> probe = Tensor<float>::full({1, 2, 8, 8}, 0.25f);
    return std::pair{c, model.forward(probe, Mode::Eval)};
  };
  auto [ca, oa] = run();
  auto [cb, ob] = run();
  REQUIRE(ca.records.size() == cb.records.size());
  for (std::size_t i = 0; i < ca.records.size(); ++i) {
    CHECK(ca.records[i].train_loss == cb.records[i].train_loss);
    CHECK(ca.records[i].test_loss == cb.records[i].test_loss);
    CHECK(ca.records[i].epoch == cb.records[i].epoch);
  }
  for (Eigen::Index i = 0; i < oa.size(); ++i) CHECK(oa[i] == ob[i]);
}

TEST_CASE("losses fall over training and records stay ordered and finite") {
  UNetConfig cfg{2, 2, 4, 1, 19, 1024};
  UNet<float> model(cfg);
  Dataset<float> train_ds = random_dataset<float>(4, 2, 16, 33, "train");
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 4;
  tc.seed = 3;
  LossCurve curve = train(model, train_ds, Dataset<float>{}, tc);
  REQUIRE(curve.records.size() == 40);
  for (std::size_t i = 0; i < curve.records.size(); ++i) {
    CHECK(std::isfinite(curve.records[i].train_loss));
    CHECK(curve.records[i].train_loss >= 0.0);
    if (i) CHECK(curve.records[i].epoch > curve.records[i - 1].epoch);
  }
  CHECK(curve.records.back().train_loss <= curve.records[9].train_loss);
  CHECK(curve.records.back().train_loss < curve.records.front().train_loss);
}

TEST_CASE("a non-finite sample aborts training with context") {
  UNetConfig cfg{2, 2, 2, 1, 23, 1024};
  UNet<float> model(cfg);
  Dataset<float> train_ds = random_dataset<float>(2, 2, 8, 41, "train");
  train_ds.samples[0].input[3] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  try {
    train(model, train_ds, Dataset<float>{}, tc);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("predictions are clamped, shaped and batch-composition independent") {
  UNetConfig cfg{2, 2, 4, 1, 29, 1024};
  UNet<float> model(cfg);
  Dataset<float> ds = random_dataset<float>(5, 2, 8, 51, "test");
  std::vector<Tensor<float>> preds = predict(model, ds, 4);
  REQUIRE(preds.size() == 5);
  for (auto& p : preds) {
    CHECK(p.shape() == std::vector<int>{2, 8, 8});
    CHECK(p.values().minCoeff() >= 0.0f);
    CHECK(p.values().maxCoeff() <= 1.0f);
  }
  // same samples, different batch size
  std::vector<Tensor<float>> preds1 = predict(model, ds, 1);
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (Eigen::Index t = 0; t < preds[i].size(); ++t) CHECK(preds[i][t] == preds1[i][t]);
}

TEST_CASE("the curve reports the best test epoch") {
  LossCurve c;
  c.records = {{1, 1.0, 0.5}, {2, 0.9, 0.4}, {3, 0.8, 0.45}};
  CHECK(c.best_test_epoch() == 2);
}
