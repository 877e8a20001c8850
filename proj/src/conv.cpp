#include "bandfuse/ops.hpp"

#include "kernels.hpp"

#include <stdexcept>

namespace bandfuse {

using detail::accumulate;
using detail::make_result;

namespace {

// Lays out the 3x3 zero-padded neighbourhood of every pixel as one column:
// row (c*9 + ky*3 + kx), column (y*W + x).
template <typename T>
RowMatrix<T> im2col_3x3(const T* x, Index channels, Index h, Index w) {
  RowMatrix<T> cols = RowMatrix<T>::Zero(channels * 9, h * w);
  for (Index c = 0; c < channels; ++c) {
    const T* plane = x + c * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        T* row = cols.row(c * 9 + ky * 3 + kx).data();
        const Index dx = kx - 1;
        const Index x0 = std::max<Index>(0, -dx);
        const Index x1 = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* src = plane + sy * w;
          T* dst = row + y * w;
          for (Index xx = x0; xx < x1; ++xx) dst[xx] = src[xx + dx];
        }
      }
    }
  }
  return cols;
}

template <typename T>
Array<T> col2im_3x3(const RowMatrix<T>& cols, Index channels, Index h, Index w) {
  Array<T> x = Array<T>::Zero(channels * h * w);
  for (Index c = 0; c < channels; ++c) {
    T* plane = x.data() + c * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const T* row = cols.row(c * 9 + ky * 3 + kx).data();
        const Index dx = kx - 1;
        const Index x0 = std::max<Index>(0, -dx);
        const Index x1 = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          const Index sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          T* dst = plane + sy * w;
          const T* src = row + y * w;
          for (Index xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
        }
      }
    }
  }
  return x;
}

}  // namespace

template <typename T>
Tensor<T> conv2d_3x3_same(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 3) throw std::invalid_argument("conv2d_3x3_same: input must be CxHxW, got " + shape_string(x.shape()));
  if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3) {
    throw std::invalid_argument("conv2d_3x3_same: weight must be Cout x Cin x 3 x 3, got " + shape_string(w.shape()));
  }
  const Index cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  if (w.dim(1) != cin) {
    throw std::invalid_argument("conv2d_3x3_same: channel mismatch, input has " + std::to_string(cin) +
                                ", weight expects " + std::to_string(w.dim(1)));
  }
  if (b.size() != cout) throw std::invalid_argument("conv2d_3x3_same: bias length mismatch");

  auto cols = std::make_shared<RowMatrix<T>>(im2col_3x3(x.data(), cin, h, wd));
  auto wm = kernels::as_matrix(w.values(), cout, cin * 9);
  RowMatrix<T> y(cout, h * wd);
  y.noalias() = wm * *cols;
  y.colwise() += b.values().matrix();

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_result<T>("conv2d_3x3_same", Shape{cout, h, wd}, kernels::to_array(y), {&x, &w, &b},
                        [xn, wn, bn, cols, cin, cout, h, wd](const Array<T>& g) {
                          auto gy = kernels::as_matrix(g, cout, h * wd);
                          if (wn->requires_grad) {
                            RowMatrix<T> gw(cout, cin * 9);
                            gw.noalias() = gy * cols->transpose();
                            accumulate(wn, kernels::as_array(gw));
                          }
                          if (bn->requires_grad) {
                            Array<T> gb = gy.rowwise().sum().array();
                            accumulate(bn, gb);
                          }
                          if (xn->requires_grad) {
                            RowMatrix<T> gcols(cin * 9, h * wd);
                            gcols.noalias() = kernels::as_matrix(wn->value, cout, cin * 9).transpose() * gy;
                            accumulate(xn, col2im_3x3(gcols, cin, h, wd));
                          }
                        });
}

template <typename T>
Tensor<T> maxpool_2x2(const Tensor<T>& x) {
  if (x.rank() != 3) throw std::invalid_argument("maxpool_2x2: input must be CxHxW");
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("maxpool_2x2: spatial dims must be even, got " + shape_string(x.shape()));
  }
  const Index oh = h / 2, ow = w / 2;
  Array<T> y(c * oh * ow);
  std::vector<Index> argmax(static_cast<std::size_t>(y.size()));
  const T* in = x.data();
  for (Index ch = 0; ch < c; ++ch) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index base = (ch * h + 2 * oy) * w + 2 * ox;
        const Index candidates[4] = {base, base + 1, base + w, base + w + 1};
        Index best = candidates[0];
        for (int i = 1; i < 4; ++i) {
          if (in[candidates[i]] > in[best]) best = candidates[i];
        }
        const Index o = (ch * oh + oy) * ow + ox;
        y[o] = in[best];
        argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  auto xn = x.node();
  return make_result<T>("maxpool_2x2", Shape{c, oh, ow}, std::move(y), {&x},
                        [xn, argmax = std::move(argmax)](const Array<T>& g) {
                          Array<T> gx = Array<T>::Zero(xn->value.size());
                          for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[static_cast<Index>(o)];
                          accumulate(xn, gx);
                        });
}

template <typename T>
Tensor<T> upsample_nearest_2x(const Tensor<T>& x) {
  if (x.rank() != 3) throw std::invalid_argument("upsample_nearest_2x: input must be CxHxW");
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const Index oh = 2 * h, ow = 2 * w;
  Array<T> y(c * oh * ow);
  const T* in = x.data();
  for (Index ch = 0; ch < c; ++ch) {
    for (Index oy = 0; oy < oh; ++oy) {
      const T* src = in + (ch * h + oy / 2) * w;
      T* dst = y.data() + (ch * oh + oy) * ow;
      for (Index ox = 0; ox < ow; ++ox) dst[ox] = src[ox / 2];
    }
  }
  auto xn = x.node();
  return make_result<T>("upsample_nearest_2x", Shape{c, oh, ow}, std::move(y), {&x},
                        [xn, c, h, w](const Array<T>& g) {
                          const Index oh = 2 * h, ow = 2 * w;
                          Array<T> gx = Array<T>::Zero(c * h * w);
                          for (Index ch = 0; ch < c; ++ch) {
                            for (Index oy = 0; oy < oh; ++oy) {
                              const T* src = g.data() + (ch * oh + oy) * ow;
                              T* dst = gx.data() + (ch * h + oy / 2) * w;
                              for (Index ox = 0; ox < ow; ++ox) dst[ox / 2] += src[ox];
                            }
                          }
                          accumulate(xn, gx);
                        });
}

#define BANDFUSE_INSTANTIATE(T)                                                          \
  template Tensor<T> conv2d_3x3_same(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> maxpool_2x2(const Tensor<T>&);                                      \
  template Tensor<T> upsample_nearest_2x(const Tensor<T>&);

BANDFUSE_INSTANTIATE(float)
BANDFUSE_INSTANTIATE(double)

#undef BANDFUSE_INSTANTIATE

}  // namespace bandfuse
