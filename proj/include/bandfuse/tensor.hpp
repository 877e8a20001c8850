#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bandfuse {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename T>
using Array = Eigen::Array<T, Eigen::Dynamic, 1>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Number of elements described by `shape`. The empty shape is a scalar.
Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class GradTape;

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  Array<T> value;
  std::optional<Array<T>> grad;
  bool requires_grad = false;
  // Id of the tape that produced this node; 0 for leaves. Ids are never
  // reused, so a node outliving its tape cannot match a later one.
  std::uint64_t tape_id = 0;
};

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

}  // namespace detail

/// Dense row-major array with optional participation in a GradTape.
///
/// A Tensor is a cheap handle: copies share the same storage, so a parameter
/// updated in place by an optimizer is seen by every holder. Values produced
/// by a recorded op must not be mutated.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, Array<T> values);

  static Tensor scalar(T value);
  static Tensor from(Shape shape, std::initializer_list<T> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index axis) const;
  Index size() const { return node_->value.size(); }

  const Array<T>& values() const { return node_->value; }
  /// Mutable access for leaves (parameters, inputs). Throws for op outputs.
  Array<T>& mutable_values();
  const T* data() const { return node_->value.data(); }

  T item() const;
  T operator[](Index flat) const { return node_->value[flat]; }
  T at(Index i, Index j) const;
  T at(Index i, Index j, Index k) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  /// Accumulated gradient, or null when no gradient reached this tensor.
  const Array<T>* grad() const { return node_->grad ? &*node_->grad : nullptr; }
  void clear_grad() { node_->grad.reset(); }

  /// Leaf copy of the current values, detached from any tape.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape(), values().template cast<U>().eval());
  }

  const detail::NodePtr<T>& node() const { return node_; }
  explicit Tensor(detail::NodePtr<T> node) : node_(std::move(node)) {}

 private:
  detail::NodePtr<T> node_;
};

/// Ordered record of executed differentiable ops.
///
/// Constructing a tape makes it the active recorder for scalar type T on the
/// current thread until it is destroyed; tapes nest. Ops record only when an
/// input requires gradients.
template <typename T>
class GradTape {
 public:
  using BackwardFn = std::function<void(const Array<T>& output_grad)>;

  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();
  std::uint64_t id() const { return id_; }

  void record(std::string op, detail::NodePtr<T> output, BackwardFn backward);

  /// Propagates d(loss)/d(x) to every participating tensor. Leaf gradients
  /// accumulate; call Tensor::clear_grad between steps.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return records_.size(); }
  std::vector<std::string> recorded_ops() const;
  /// Op names in the order backward visited them.
  const std::vector<std::string>& backward_order() const { return visited_; }

 private:
  struct Record {
    std::string op;
    detail::NodePtr<T> output;
    BackwardFn backward;
  };

  std::vector<Record> records_;
  std::vector<std::string> visited_;
  GradTape* previous_ = nullptr;
  std::uint64_t id_;
  bool consumed_ = false;
};

namespace detail {

/// Adds `g` into the gradient of `node` if the node participates.
template <typename T, typename Expr>
void accumulate(const NodePtr<T>& node, const Expr& g) {
  if (!node->requires_grad) return;
  if (node->grad) {
    *node->grad += g;
  } else {
    node->grad.emplace(g);
  }
}

void throw_non_finite(const char* op);

/// Wraps a freshly computed value into a Tensor and records it on the active
/// tape when any input requires gradients. `backward` receives the output
/// gradient and accumulates into the inputs it captured.
template <typename T, typename Fn>
Tensor<T> make_result(const char* op, Shape shape, Array<T> value,
                      std::initializer_list<const Tensor<T>*> inputs, Fn&& backward) {
  if (!value.allFinite()) throw_non_finite(op);
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  GradTape<T>* tape = GradTape<T>::active();
  bool needs_grad = false;
  if (tape != nullptr) {
    for (const Tensor<T>* in : inputs) needs_grad = needs_grad || in->requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->tape_id = tape->id();
    tape->record(op, node, std::forward<Fn>(backward));
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

}  // namespace bandfuse
