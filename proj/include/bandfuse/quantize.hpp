#pragma once

#include "bandfuse/tensor.hpp"

namespace bandfuse {

enum class QuantMode {
  SymmetricWeight,     // {-(2^(b-1)-1) .. 2^(b-1)-1} * scale
  UnsignedActivation,  // {0 .. 2^b-1} * scale
};

struct QuantSpec {
  int bits = 8;
  QuantMode mode = QuantMode::SymmetricWeight;
  double scale = 1.0;

  void validate() const;
  long long grid_min() const;
  long long grid_max() const;
};

/// Rounds onto the grid, clips to its range and maps back to reals.
/// Backward is the straight-through estimator: identity where the rounded
/// value falls inside the grid, zero outside.
template <typename T>
Tensor<T> fake_quantize(const Tensor<T>& x, const QuantSpec& q);

/// Per-tensor max-abs scale for a symmetric weight grid. Returns 1 for an
/// all-zero tensor so the spec stays valid.
template <typename T>
double weight_scale_max_abs(const Tensor<T>& w, int bits);

/// Scale mapping an observed activation maximum onto the unsigned grid.
double activation_scale_from_max(double observed_max, int bits);

}  // namespace bandfuse
