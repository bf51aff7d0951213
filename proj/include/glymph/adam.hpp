#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "glymph/tensor.hpp"

namespace glymph {

template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S>* tensor = nullptr;
};

/// Optimizer state for bias-corrected Adam. Moment buffers are allocated on
/// the first step and keep the parameter shapes from then on.
template <typename S>
struct AdamState {
  using Buffer = typename Tensor<S>::Buffer;

  long step_count = 0;
  S learning_rate = static_cast<S>(1e-3);
  S beta1 = static_cast<S>(0.9);
  S beta2 = static_cast<S>(0.999);
  S epsilon = static_cast<S>(1e-8);
  std::vector<Buffer> first_moment;
  std::vector<Buffer> second_moment;
};

/// One Adam update over the parameter list. Gradients are read from each
/// tensor's grad buffer; every parameter must carry one, so a missing
/// backward pass surfaces as an error instead of silently freezing training.
template <typename S>
void adam_step(std::vector<NamedParam<S>>& params, AdamState<S>& state) {
  using Buf = typename Tensor<S>::Buffer;
  if (state.first_moment.empty()) {
    state.first_moment.reserve(params.size());
    state.second_moment.reserve(params.size());
    for (auto& p : params) {
      state.first_moment.emplace_back(Buf::Zero(p.tensor->size()));
      state.second_moment.emplace_back(Buf::Zero(p.tensor->size()));
    }
  }
  if (state.first_moment.size() != params.size())
    fail(ErrorKind::Shape, "adam_step: parameter count changed under existing state");

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].tensor;
    if (!p.has_grad())
      fail(ErrorKind::Value, "adam_step: parameter '" + params[i].name + "' has no gradient");
    if (state.first_moment[i].size() != p.size())
      fail(ErrorKind::Shape,
           "adam_step: parameter '" + params[i].name + "' changed shape under existing state");
    const auto& g = p.grad();
    for (Eigen::Index t = 0; t < g.size(); ++t)
      if (!std::isfinite(static_cast<double>(g[t])))
        fail(ErrorKind::Numeric,
             "adam_step: non-finite gradient in parameter '" + params[i].name + "'");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const S bc1 = static_cast<S>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const S bc2 = static_cast<S>(1.0 - std::pow(static_cast<double>(state.beta2), t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].tensor;
    const auto& g = p.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (S(1) - state.beta1) * g;
    v = state.beta2 * v + (S(1) - state.beta2) * g.square();
    p.values() -= state.learning_rate * (m / bc1) / ((v / bc2).sqrt() + state.epsilon);
  }
}

} // namespace glymph
