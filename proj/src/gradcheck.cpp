#include "bandfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bandfuse {

namespace {

constexpr double kGradFloor = 1e-6;

double evaluate(const std::function<Tensor<double>()>& loss) {
  const double v = loss().item();
  if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: function is not finite");
  return v;
}

void compare(GradCheckResult& result, Index index, double analytic, double numeric) {
  const double err = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), kGradFloor);
  if (err > result.max_rel_error || result.worst_index < 0) {
    result.max_rel_error = err;
    result.worst_index = index;
    result.analytic = analytic;
    result.numeric = numeric;
  }
}

}  // namespace

GradCheckResult finite_diff_check_params(const std::function<Tensor<double>()>& loss,
                                         const std::vector<Tensor<double>>& params, double h) {
  std::vector<bool> previous;
  for (const auto& p : params) {
    previous.push_back(p.requires_grad());
    Tensor<double>(p).set_requires_grad(true);
    Tensor<double>(p).clear_grad();
  }
  {
    GradTape<double> tape;
    Tensor<double> out = loss();
    if (!std::isfinite(out.item())) throw std::domain_error("finite_diff_check: function is not finite");
    tape.backward(out);
  }

  GradCheckResult result;
  Index offset = 0;
  for (const auto& param : params) {
    Tensor<double> p = param;
    const Array<double> analytic =
        p.grad() != nullptr ? *p.grad() : Array<double>(Array<double>::Zero(p.size()));
    Array<double>& values = p.mutable_values();
    for (Index i = 0; i < p.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + 2.0 * h;
      const double up2 = evaluate(loss);
      values[i] = saved + h;
      const double up1 = evaluate(loss);
      values[i] = saved - h;
      const double down1 = evaluate(loss);
      values[i] = saved - 2.0 * h;
      const double down2 = evaluate(loss);
      values[i] = saved;
      compare(result, offset + i, analytic[i], (-up2 + 8.0 * up1 - 8.0 * down1 + down2) / (12.0 * h));
    }
    offset += p.size();
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<double> p = params[i];
    p.clear_grad();
    p.set_requires_grad(previous[i]);
  }
  return result;
}

GradCheckResult finite_diff_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                  const Tensor<double>& x, double h) {
  Tensor<double> probe = x.detach();
  return finite_diff_check_params([&] { return f(probe); }, {probe}, h);
}

}  // namespace bandfuse
