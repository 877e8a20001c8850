#include "bandfuse/quantize.hpp"

#include <cmath>
#include <stdexcept>

namespace bandfuse {

void QuantSpec::validate() const {
  if (bits != 4 && bits != 8) throw std::invalid_argument("QuantSpec: bits must be 4 or 8, got " + std::to_string(bits));
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("QuantSpec: scale must be positive");
}

long long QuantSpec::grid_min() const {
  return mode == QuantMode::SymmetricWeight ? -((1LL << (bits - 1)) - 1) : 0;
}

long long QuantSpec::grid_max() const {
  return mode == QuantMode::SymmetricWeight ? (1LL << (bits - 1)) - 1 : (1LL << bits) - 1;
}

template <typename T>
Tensor<T> fake_quantize(const Tensor<T>& x, const QuantSpec& q) {
  q.validate();
  const T s = static_cast<T>(q.scale);
  const T lo = static_cast<T>(q.grid_min());
  const T hi = static_cast<T>(q.grid_max());
  Array<T> steps = (x.values() / s).unaryExpr([](T v) { return std::nearbyint(v); });
  Array<T> pass = ((steps >= lo) && (steps <= hi)).template cast<T>();
  Array<T> y = steps.max(lo).min(hi) * s;
  auto xn = x.node();
  return detail::make_result<T>("fake_quantize", x.shape(), std::move(y), {&x},
                                [xn, pass = std::move(pass)](const Array<T>& g) {
                                  detail::accumulate(xn, (g * pass).eval());
                                });
}

template <typename T>
double weight_scale_max_abs(const Tensor<T>& w, int bits) {
  const double m = static_cast<double>(w.values().abs().maxCoeff());
  if (m == 0.0) return 1.0;
  return m / static_cast<double>((1LL << (bits - 1)) - 1);
}

double activation_scale_from_max(double observed_max, int bits) {
  if (!(observed_max > 0.0)) return 1.0;
  return observed_max / static_cast<double>((1LL << bits) - 1);
}

template Tensor<float> fake_quantize(const Tensor<float>&, const QuantSpec&);
template Tensor<double> fake_quantize(const Tensor<double>&, const QuantSpec&);
template double weight_scale_max_abs(const Tensor<float>&, int);
template double weight_scale_max_abs(const Tensor<double>&, int);

}  // namespace bandfuse
