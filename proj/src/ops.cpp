#include "bandfuse/ops.hpp"

#include "kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bandfuse {

using detail::accumulate;
using detail::make_result;

namespace {

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                                shape_string(b));
  }
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_string(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  auto an = a.node(), bn = b.node();
  return make_result<T>("add", a.shape(), a.values() + b.values(), {&a, &b},
                        [an, bn](const Array<T>& g) {
                          accumulate(an, g);
                          accumulate(bn, g);
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  auto an = a.node(), bn = b.node();
  return make_result<T>("mul", a.shape(), a.values() * b.values(), {&a, &b},
                        [an, bn](const Array<T>& g) {
                          accumulate(an, (g * bn->value).eval());
                          accumulate(bn, (g * an->value).eval());
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto an = a.node();
  return make_result<T>("scale", a.shape(), a.values() * factor, {&a},
                        [an, factor](const Array<T>& g) { accumulate(an, (g * factor).eval()); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto an = a.node();
  Array<T> v(1);
  v[0] = a.values().sum();
  return make_result<T>("sum", Shape{}, std::move(v), {&a}, [an](const Array<T>& g) {
    accumulate(an, Array<T>::Constant(an->value.size(), g[0]));
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  auto an = a.node();
  const T inv = T(1) / static_cast<T>(a.size());
  Array<T> v(1);
  v[0] = a.values().sum() * inv;
  return make_result<T>("mean", Shape{}, std::move(v), {&a}, [an, inv](const Array<T>& g) {
    accumulate(an, Array<T>::Constant(an->value.size(), g[0] * inv));
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw std::invalid_argument("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  auto an = a.node();
  return make_result<T>("reshape", std::move(shape), a.values(), {&a},
                        [an](const Array<T>& g) { accumulate(an, g); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto xn = x.node();
  return make_result<T>("relu", x.shape(), x.values().max(T(0)), {&x}, [xn](const Array<T>& g) {
    accumulate(xn, (xn->value > T(0)).select(g, T(0)).eval());
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner dims differ " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  RowMatrix<T> y = kernels::as_matrix(a.values(), m, k) * kernels::as_matrix(b.values(), k, n);
  auto an = a.node(), bn = b.node();
  return make_result<T>("matmul", Shape{m, n}, kernels::to_array(y), {&a, &b},
                        [an, bn, m, k, n](const Array<T>& g) {
                          auto gy = kernels::as_matrix(g, m, n);
                          if (an->requires_grad) {
                            RowMatrix<T> ga = gy * kernels::as_matrix(bn->value, k, n).transpose();
                            accumulate(an, kernels::as_array(ga));
                          }
                          if (bn->requires_grad) {
                            RowMatrix<T> gb = kernels::as_matrix(an->value, m, k).transpose() * gy;
                            accumulate(bn, kernels::as_array(gb));
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank("transpose", a.shape(), 2);
  const Index m = a.dim(0), n = a.dim(1);
  RowMatrix<T> y = kernels::as_matrix(a.values(), m, n).transpose();
  auto an = a.node();
  return make_result<T>("transpose", Shape{n, m}, kernels::to_array(y), {&a},
                        [an, m, n](const Array<T>& g) {
                          RowMatrix<T> ga = kernels::as_matrix(g, n, m).transpose();
                          accumulate(an, kernels::as_array(ga));
                        });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank("add_row_bias", x.shape(), 2);
  const Index m = x.dim(0), n = x.dim(1);
  if (bias.size() != n) throw std::invalid_argument("add_row_bias: bias width mismatch");
  RowMatrix<T> y = kernels::as_matrix(x.values(), m, n);
  y.rowwise() += kernels::as_matrix(bias.values(), 1, n).row(0);
  auto xn = x.node(), bn = bias.node();
  return make_result<T>("add_row_bias", x.shape(), kernels::to_array(y), {&x, &bias},
                        [xn, bn, m, n](const Array<T>& g) {
                          accumulate(xn, g);
                          if (bn->requires_grad) {
                            Eigen::Matrix<T, 1, Eigen::Dynamic> gb = kernels::as_matrix(g, m, n).colwise().sum();
                            accumulate(bn, gb.transpose().array());
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_row_bias(matmul(x, w), b);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, Index start, Index count) {
  require_rank("slice_cols", x.shape(), 2);
  const Index m = x.dim(0), n = x.dim(1);
  if (start < 0 || count <= 0 || start + count > n) throw std::invalid_argument("slice_cols: out of range");
  RowMatrix<T> y = kernels::as_matrix(x.values(), m, n).middleCols(start, count);
  auto xn = x.node();
  return make_result<T>("slice_cols", Shape{m, count}, kernels::to_array(y), {&x},
                        [xn, m, n, start, count](const Array<T>& g) {
                          RowMatrix<T> gx = RowMatrix<T>::Zero(m, n);
                          gx.middleCols(start, count) = kernels::as_matrix(g, m, count);
                          accumulate(xn, kernels::as_array(gx));
                        });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index m = parts.front().dim(0);
  Index n = 0;
  for (const auto& p : parts) {
    require_rank("concat_cols", p.shape(), 2);
    if (p.dim(0) != m) throw std::invalid_argument("concat_cols: row count mismatch");
    n += p.dim(1);
  }
  RowMatrix<T> y(m, n);
  std::vector<detail::NodePtr<T>> nodes;
  std::vector<Index> widths;
  Index col = 0;
  for (const auto& p : parts) {
    y.middleCols(col, p.dim(1)) = kernels::as_matrix(p.values(), m, p.dim(1));
    col += p.dim(1);
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }

  // make_result takes a fixed list of inputs; record against all parts.
  if (!y.allFinite()) detail::throw_non_finite("concat_cols");
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = Shape{m, n};
  node->value = kernels::to_array(y);
  GradTape<T>* tape = GradTape<T>::active();
  bool needs_grad = false;
  if (tape != nullptr) {
    for (const auto& p : parts) needs_grad = needs_grad || p.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->tape_id = tape->id();
    tape->record("concat_cols", node, [nodes, widths, m, n](const Array<T>& g) {
      auto gm = kernels::as_matrix(g, m, n);
      Index c = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i]->requires_grad) {
          RowMatrix<T> part = gm.middleCols(c, widths[i]);
          accumulate(nodes[i], kernels::as_array(part));
        }
        c += widths[i];
      }
    });
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> mask_rows(const Tensor<T>& x, const std::vector<bool>& keep) {
  require_rank("mask_rows", x.shape(), 2);
  const Index m = x.dim(0), n = x.dim(1);
  if (static_cast<Index>(keep.size()) != m) throw std::invalid_argument("mask_rows: mask length mismatch");
  Array<T> row_scale(m);
  for (Index i = 0; i < m; ++i) row_scale[i] = keep[static_cast<std::size_t>(i)] ? T(1) : T(0);
  RowMatrix<T> y = kernels::as_matrix(x.values(), m, n);
  y.array().colwise() *= row_scale;
  auto xn = x.node();
  return make_result<T>("mask_rows", x.shape(), kernels::to_array(y), {&x},
                        [xn, row_scale, m, n](const Array<T>& g) {
                          RowMatrix<T> gx = kernels::as_matrix(g, m, n);
                          gx.array().colwise() *= row_scale;
                          accumulate(xn, kernels::as_array(gx));
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  const Index d = x.shape().empty() ? 1 : x.dim(-1);
  if (gamma.size() != d || beta.size() != d) throw std::invalid_argument("layer_norm: affine width mismatch");
  const Index rows = x.size() / d;

  auto xm = kernels::as_matrix(x.values(), rows, d);
  RowMatrix<T> xhat(rows, d);
  Array<T> inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const T mu = xm.row(r).mean();
    const T var = (xm.row(r).array() - mu).square().mean();
    inv_std[r] = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (xm.row(r).array() - mu) * inv_std[r];
  }
  RowMatrix<T> y = xhat;
  y.array().rowwise() *= gamma.values().transpose();
  y.array().rowwise() += beta.values().transpose();

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result<T>(
      "layer_norm", x.shape(), kernels::to_array(y), {&x, &gamma, &beta},
      [xn, gn, bn, xhat, inv_std, rows, d](const Array<T>& g) {
        auto gy = kernels::as_matrix(g, rows, d);
        if (gn->requires_grad) {
          Array<T> gg = (gy.array() * xhat.array()).colwise().sum().transpose();
          accumulate(gn, gg);
        }
        if (bn->requires_grad) {
          Array<T> gb = gy.colwise().sum().transpose().array();
          accumulate(bn, gb);
        }
        if (xn->requires_grad) {
          RowMatrix<T> dxhat = gy;
          dxhat.array().rowwise() *= gn->value.transpose();
          RowMatrix<T> gx(rows, d);
          for (Index r = 0; r < rows; ++r) {
            const T m1 = dxhat.row(r).mean();
            const T m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
            gx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std[r];
          }
          accumulate(xn, kernels::as_array(gx));
        }
      });
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, const std::vector<bool>& mask) {
  const Index n = logits.shape().empty() ? 1 : logits.dim(-1);
  if (static_cast<Index>(mask.size()) != n) throw std::invalid_argument("masked_softmax: mask length mismatch");
  bool any = false;
  for (bool b : mask) any = any || b;
  if (!any) throw std::invalid_argument("masked_softmax: every position is masked");

  const Index rows = logits.size() / n;
  auto lm = kernels::as_matrix(logits.values(), rows, n);
  RowMatrix<T> y = RowMatrix<T>::Zero(rows, n);
  for (Index r = 0; r < rows; ++r) {
    T hi = -std::numeric_limits<T>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (mask[static_cast<std::size_t>(j)]) hi = std::max(hi, lm(r, j));
    }
    T total = 0;
    for (Index j = 0; j < n; ++j) {
      if (mask[static_cast<std::size_t>(j)]) {
        y(r, j) = std::exp(lm(r, j) - hi);
        total += y(r, j);
      }
    }
    y.row(r) /= total;
  }
  auto ln = logits.node();
  RowMatrix<T> probs = y;
  return make_result<T>("masked_softmax", logits.shape(), kernels::to_array(y), {&logits},
                        [ln, probs, rows, n](const Array<T>& g) {
                          auto gy = kernels::as_matrix(g, rows, n);
                          RowMatrix<T> gx(rows, n);
                          for (Index r = 0; r < rows; ++r) {
                            const T dot = (gy.row(r).array() * probs.row(r).array()).sum();
                            gx.row(r) = probs.row(r).array() * (gy.row(r).array() - dot);
                          }
                          accumulate(ln, kernels::as_array(gx));
                        });
}

template <typename T>
Tensor<T> cross_entropy_mean(const Tensor<T>& logits, std::span<const Label> labels, int ignore_label) {
  require_rank("cross_entropy_mean", logits.shape(), 3);
  const Index k = logits.dim(0), pixels = logits.dim(1) * logits.dim(2);
  if (static_cast<Index>(labels.size()) != pixels) {
    throw std::invalid_argument("cross_entropy_mean: label count does not match logits");
  }
  auto lm = kernels::as_matrix(logits.values(), k, pixels);
  RowMatrix<T> probs = RowMatrix<T>::Zero(k, pixels);
  double total = 0;
  Index counted = 0;
  for (Index p = 0; p < pixels; ++p) {
    const int label = labels[static_cast<std::size_t>(p)];
    if (label == ignore_label) continue;
    if (label < 0 || label >= k) {
      throw std::invalid_argument("cross_entropy_mean: label " + std::to_string(label) + " out of range");
    }
    const T hi = lm.col(p).maxCoeff();
    T z = 0;
    for (Index c = 0; c < k; ++c) {
      probs(c, p) = std::exp(lm(c, p) - hi);
      z += probs(c, p);
    }
    probs.col(p) /= z;
    total += static_cast<double>(hi + std::log(z) - lm(label, p));
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross_entropy_mean: every pixel is ignored");

  Array<T> v(1);
  v[0] = static_cast<T>(total / static_cast<double>(counted));
  std::vector<Label> kept(labels.begin(), labels.end());
  auto ln = logits.node();
  return make_result<T>("cross_entropy_mean", Shape{}, std::move(v), {&logits},
                        [ln, probs, kept, k, pixels, counted, ignore_label](const Array<T>& g) {
                          RowMatrix<T> gx = probs;
                          for (Index p = 0; p < pixels; ++p) {
                            const int label = kept[static_cast<std::size_t>(p)];
                            if (label == ignore_label) continue;
                            gx(label, p) -= T(1);
                          }
                          gx *= g[0] / static_cast<T>(counted);
                          accumulate(ln, kernels::as_array(gx));
                        });
}

#define BANDFUSE_INSTANTIATE(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                  \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                            \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> transpose(const Tensor<T>&);                                                 \
  template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> slice_cols(const Tensor<T>&, Index, Index);                                  \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                  \
  template Tensor<T> mask_rows(const Tensor<T>&, const std::vector<bool>&);                       \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);         \
  template Tensor<T> masked_softmax(const Tensor<T>&, const std::vector<bool>&);                  \
  template Tensor<T> cross_entropy_mean(const Tensor<T>&, std::span<const Label>, int);

BANDFUSE_INSTANTIATE(float)
BANDFUSE_INSTANTIATE(double)

#undef BANDFUSE_INSTANTIATE

}  // namespace bandfuse
