#pragma once

#include "bandfuse/tensor.hpp"

#include <functional>

namespace bandfuse {

struct GradCheckResult {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the tape gradient of a scalar function against five-point
/// central differences, coordinate by coordinate. The relative error of a
/// coordinate is |a - n| / max(|a| + |n|, 1e-6); the floor keeps gradients
/// that are zero up to rounding from dominating the result.
///
/// `f` is evaluated under a fresh tape with `x` marked as requiring
/// gradients. Points where `f` has a kink (relu at 0, pooling ties) give
/// meaningless errors and must be avoided by the caller.
GradCheckResult finite_diff_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                  const Tensor<double>& x, double h = 1e-4);

/// Same check over a set of parameters that `loss` closes over. Each
/// parameter is perturbed in place and restored.
GradCheckResult finite_diff_check_params(const std::function<Tensor<double>()>& loss,
                                         const std::vector<Tensor<double>>& params, double h = 1e-4);

}  // namespace bandfuse
