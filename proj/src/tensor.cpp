#include "bandfuse/tensor.hpp"

#include <atomic>
#include <sstream>
#include <stdexcept>

namespace bandfuse {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_string(shape));
  }
}

}  // namespace

namespace detail {

void throw_non_finite(const char* op) {
  throw std::domain_error(std::string("non-finite value produced by ") + op);
}

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<detail::TensorNode<T>>()) {
  validate_shape(shape);
  node_->value = Array<T>::Constant(shape_size(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, Array<T> values) : node_(std::make_shared<detail::TensorNode<T>>()) {
  validate_shape(shape);
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("shape " + shape_string(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, value);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::initializer_list<T> values) {
  Array<T> a(static_cast<Index>(values.size()));
  Index i = 0;
  for (T v : values) a[i++] = v;
  return Tensor(std::move(shape), std::move(a));
}

template <typename T>
Index Tensor<T>::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw std::out_of_range("axis out of range");
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
Array<T>& Tensor<T>::mutable_values() {
  if (node_->tape_id != 0) throw std::logic_error("cannot mutate a recorded op output");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw std::invalid_argument("item() needs a single-element tensor, got " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(Index i, Index j) const {
  return node_->value[i * dim(1) + j];
}

template <typename T>
T Tensor<T>::at(Index i, Index j, Index k) const {
  return node_->value[(i * dim(1) + j) * dim(2) + k];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), values());
}

namespace {

template <typename T>
GradTape<T>*& active_tape() {
  thread_local GradTape<T>* tape = nullptr;
  return tape;
}

std::uint64_t next_tape_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace

template <typename T>
GradTape<T>::GradTape() : previous_(active_tape<T>()), id_(next_tape_id()) {
  active_tape<T>() = this;
}

template <typename T>
GradTape<T>::~GradTape() {
  active_tape<T>() = previous_;
}

template <typename T>
GradTape<T>* GradTape<T>::active() {
  return active_tape<T>();
}

template <typename T>
void GradTape<T>::record(std::string op, detail::NodePtr<T> output, BackwardFn backward) {
  records_.push_back(Record{std::move(op), std::move(output), std::move(backward)});
}

template <typename T>
std::vector<std::string> GradTape<T>::recorded_ops() const {
  std::vector<std::string> ops;
  ops.reserve(records_.size());
  for (const auto& r : records_) ops.push_back(r.op);
  return ops;
}

template <typename T>
void GradTape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.node()->tape_id != id_) {
    throw std::invalid_argument("backward: loss was not produced on this tape");
  }
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (consumed_) throw std::logic_error("backward: tape already replayed");
  consumed_ = true;

  detail::accumulate(loss.node(), Array<T>::Ones(1));
  visited_.clear();
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    visited_.push_back(it->op);
    if (!it->output->grad) continue;
    it->backward(*it->output->grad);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class GradTape<float>;
template class GradTape<double>;

}  // namespace bandfuse
