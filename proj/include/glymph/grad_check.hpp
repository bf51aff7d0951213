#pragma once

#include <cmath>
#include <utility>

#include "glymph/tensor.hpp"

namespace glymph {

/// Compares the analytic gradient stored in x.grad against central finite
/// differences of the scalar function f (which must read x by reference).
/// Returns the maximum relative error over all coordinates. The caller is
/// responsible for choosing an input point away from non-differentiable
/// kinks (zero relu inputs, pooling ties).
template <typename S, typename F>
double max_relative_grad_error(F&& f, Tensor<S>& x, double h, double floor = 1e-6) {
  const auto analytic = x.grad(); // copy; f may touch gradients
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S saved = x[i];
    x[i] = saved + static_cast<S>(h);
    const double f_plus = static_cast<double>(f());
    x[i] = saved - static_cast<S>(h);
    const double f_minus = static_cast<double>(f());
    x[i] = saved;
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(fd), std::abs(a), floor});
    worst = std::max(worst, std::abs(fd - a) / denom);
  }
  return worst;
}

} // namespace glymph
