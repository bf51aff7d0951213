#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "glymph/adam.hpp"
#include "glymph/preprocess.hpp"
#include "glymph/unet.hpp"

namespace glymph {

enum class LossKind { L1, L2 };

inline const char* loss_name(LossKind k) { return k == LossKind::L1 ? "l1" : "l2"; }

template <typename S>
struct LossValue {
  S value;
  Tensor<S> grad; // d value / d pred
};

/// Mean-reduced regression loss over all elements. L2 is the mean squared
/// error, L1 the mean absolute error; the L1 subgradient at exact equality
/// is zero.
template <typename S>
LossValue<S> loss(const Tensor<S>& pred, const Tensor<S>& target, LossKind kind) {
  if (!pred.same_shape(target))
    fail(ErrorKind::Shape, "loss: prediction " + pred.shape_string() + " vs target " +
                               target.shape_string());
  const S inv_n = S(1) / static_cast<S>(pred.size());
  LossValue<S> out{S(0), Tensor<S>::uninit(pred.shape())};
  if (kind == LossKind::L2) {
    out.grad.values() = pred.values() - target.values();
    out.value = out.grad.values().square().sum() * inv_n;
    out.grad.values() *= S(2) * inv_n;
  } else {
    auto diff = pred.values() - target.values();
    out.value = diff.abs().sum() * inv_n;
    out.grad.values() = diff.sign() * inv_n;
  }
  return out;
}

struct TrainConfig {
  LossKind loss_kind = LossKind::L2;
  int epochs = 250;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int log_every = 1; // epochs between loss-curve records
};

struct LossCurve {
  struct Record {
    int epoch; // 1-based
    double train_loss;
    double test_loss;
  };
  std::vector<Record> records;

  int best_test_epoch() const {
    int best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (const auto& r : records)
      if (r.test_loss < best_loss) {
        best_loss = r.test_loss;
        best = r.epoch;
      }
    return best;
  }
};

namespace detail {

template <typename S>
Tensor<S> stack_batch(const Dataset<S>& ds, const std::vector<int>& idx, bool target) {
  const Tensor<S>& first = target ? ds.samples[0].target : ds.samples[0].input;
  std::vector<int> shape = first.shape();
  shape.insert(shape.begin(), static_cast<int>(idx.size()));
  Tensor<S> out = Tensor<S>::uninit(shape);
  const Eigen::Index per = first.size();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor<S>& t =
        target ? ds.samples[static_cast<std::size_t>(idx[i])].target
               : ds.samples[static_cast<std::size_t>(idx[i])].input;
    std::copy_n(t.data(), per, out.data() + static_cast<Eigen::Index>(i) * per);
  }
  return out;
}

} // namespace detail

/// Mean loss of the model over a dataset in eval mode, reduction order fixed
/// (sequential batches, samples weighted equally).
template <typename S>
double evaluate_loss(UNet<S>& model, const Dataset<S>& ds, LossKind kind, int batch_size) {
  double total = 0.0;
  long count = 0;
  for (int start = 0; start < ds.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    Tensor<S> in = detail::stack_batch(ds, idx, false);
    Tensor<S> tg = detail::stack_batch(ds, idx, true);
    Tensor<S> pred = model.forward(in, Mode::Eval);
    total += static_cast<double>(loss(pred, tg, kind).value) * static_cast<double>(idx.size());
    count += static_cast<long>(idx.size());
  }
  return total / static_cast<double>(count);
}

/// Seeded epoch loop: per-epoch shuffling, mini-batches of batch_size (the
/// final partial batch is kept), Adam updates, and a loss-curve record every
/// log_every epochs. Deterministic for a fixed seed.
template <typename S>
LossCurve train(UNet<S>& model, const Dataset<S>& train_ds, const Dataset<S>& test_ds,
                const TrainConfig& config) {
  if (train_ds.size() == 0) fail(ErrorKind::Value, "train: empty training dataset");
  if (config.epochs <= 0 || config.batch_size <= 0 || config.log_every <= 0)
    fail(ErrorKind::Config, "train: epochs, batch_size and log_every must be positive");

  auto params = model.trainable_params();
  AdamState<S> adam;
  adam.learning_rate = static_cast<S>(config.learning_rate);
  Rng shuffle_rng(derive_seed(config.seed, 17));

  std::vector<int> order(static_cast<std::size_t>(train_ds.size()));
  for (int i = 0; i < train_ds.size(); ++i) order[static_cast<std::size_t>(i)] = i;

  LossCurve curve;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int start = 0; start < train_ds.size(); start += config.batch_size) {
      std::vector<int> idx(order.begin() + start,
                           order.begin() + std::min(train_ds.size(), start + config.batch_size));
      Tensor<S> in = detail::stack_batch(train_ds, idx, false);
      Tensor<S> tg = detail::stack_batch(train_ds, idx, true);

      UNetTrace<S> trace;
      Tensor<S> pred = model.forward(in, Mode::Train, trace);
      LossValue<S> l = loss(pred, tg, config.loss_kind);
      if (!std::isfinite(static_cast<double>(l.value)))
        fail(ErrorKind::Numeric, "train: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch starting at sample " + std::to_string(start));
      epoch_loss += static_cast<double>(l.value) * static_cast<double>(idx.size());

      model.zero_grad();
      model.backward(trace, l.grad);
      adam_step(params, adam);
    }
    epoch_loss /= static_cast<double>(train_ds.size());

    if (epoch % config.log_every == 0 || epoch == config.epochs) {
      const double test_loss =
          test_ds.size() > 0 ? evaluate_loss(model, test_ds, config.loss_kind, config.batch_size)
                             : 0.0;
      curve.records.push_back({epoch, epoch_loss, test_loss});
    }
  }
  return curve;
}

/// Eval-mode predictions for a whole dataset, clamped to [0, 1]. Per-sample
/// results are independent of batch composition.
template <typename S>
std::vector<Tensor<S>> predict(UNet<S>& model, const Dataset<S>& ds, int batch_size = 8) {
  std::vector<Tensor<S>> out;
  out.reserve(static_cast<std::size_t>(ds.size()));
  for (int start = 0; start < ds.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    Tensor<S> in = detail::stack_batch(ds, idx, false);
    Tensor<S> pred = model.forward(in, Mode::Eval);
    const Eigen::Index per = pred.size() / static_cast<Eigen::Index>(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::vector<int> shape(pred.shape().begin() + 1, pred.shape().end());
      Tensor<S> one = Tensor<S>::uninit(shape);
      const S* src = pred.data() + static_cast<Eigen::Index>(i) * per;
      for (Eigen::Index t = 0; t < per; ++t) one[t] = std::clamp(src[t], S(0), S(1));
      out.push_back(std::move(one));
    }
  }
  return out;
}

} // namespace glymph
