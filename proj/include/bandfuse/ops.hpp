#pragma once

#include "bandfuse/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace bandfuse {

using Label = std::uint8_t;
inline constexpr int kIgnoreLabel = 255;

// Elementwise and reductions. Binary ops require identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// Subgradient at 0 is 0.
template <typename T> Tensor<T> relu(const Tensor<T>& x);

/// [m x k] * [k x n] -> [m x n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
/// x[m x n] + bias[n] broadcast over rows.
template <typename T> Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias);
/// x[m x k] * w[k x n] + b[n].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, Index start, Index count);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
/// Zeroes every row whose flag is false.
template <typename T> Tensor<T> mask_rows(const Tensor<T>& x, const std::vector<bool>& keep);

/// Normalizes over the last dimension (population variance), then applies
/// the affine gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

/// Softmax over the last dimension restricted to positions where `mask` is
/// true. Masked positions get exactly zero weight.
template <typename T> Tensor<T> masked_softmax(const Tensor<T>& logits, const std::vector<bool>& mask);

/// Zero-padded 3x3 convolution, x[Cin x H x W], w[Cout x Cin x 3 x 3], b[Cout].
template <typename T>
Tensor<T> conv2d_3x3_same(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
/// Non-overlapping 2x2 max; ties route the gradient to the first maximum.
template <typename T> Tensor<T> maxpool_2x2(const Tensor<T>& x);
template <typename T> Tensor<T> upsample_nearest_2x(const Tensor<T>& x);

/// Mean pixel-wise cross-entropy of logits[K x H x W] over labels that are
/// not `ignore_label`.
template <typename T>
Tensor<T> cross_entropy_mean(const Tensor<T>& logits, std::span<const Label> labels,
                             int ignore_label = kIgnoreLabel);

}  // namespace bandfuse
