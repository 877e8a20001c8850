#pragma once

#include "bandfuse/tensor.hpp"

namespace bandfuse::kernels {

template <typename T>
Eigen::Map<const RowMatrix<T>> as_matrix(const Array<T>& a, Index rows, Index cols) {
  return Eigen::Map<const RowMatrix<T>>(a.data(), rows, cols);
}

template <typename T>
Eigen::Map<const Array<T>> as_array(const RowMatrix<T>& m) {
  return Eigen::Map<const Array<T>>(m.data(), m.size());
}

template <typename T>
Array<T> to_array(const RowMatrix<T>& m) {
  return as_array(m);
}

}  // namespace bandfuse::kernels
