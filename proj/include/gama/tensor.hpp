#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gama/error.hpp"

namespace gama {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

/// Storage for tensor values and gradients. Vectorized reductions peel a
/// head up to the first aligned element, so a fixed base alignment keeps the
/// summation order, and therefore the rounding, independent of where the
/// allocator places a buffer.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::function<void(Node&)> backward;

  Buffer<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Thread-local switch that stops ops from recording onto the tape.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Ordered record of executed differentiable ops for one worker thread.
///
/// An op is recorded only when one of its inputs requires a gradient, so
/// every recorded node's inputs were produced before it (or are leaves).
/// `backward` walks the record in exact reverse order from the loss and
/// then clears it.
template <typename T>
class Tape {
 public:
  static Tape& current();

  void record(std::shared_ptr<detail::Node<T>> node) { ops_.push_back(std::move(node)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  void backward(const Tensor<T>& loss);

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> ops_;
};

/// Dense row-major n-d array with an optional gradient. Copies share storage
/// (handle semantics, like framework tensors); use `clone()` for a deep copy.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, const std::vector<T>& data);
  static Tensor from_buffer(Shape shape, Buffer<T> data);
  static Tensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T* ptr() { return node_->data.data(); }
  const T* ptr() const { return node_->data.data(); }
  const Buffer<T>& vec() const { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  /// Only leaves may toggle; returns *this for chaining.
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return node_->is_leaf; }

  T item() const;
  T at(std::initializer_list<int64_t> index) const;

  /// Deep copy of the values, detached from any graph.
  Tensor clone() const;
  Tensor detach() const { return clone(); }

  Eigen::Map<RowMatrix> matrix();
  Eigen::Map<const RowMatrix> matrix() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Throws if any value (or present gradient) is NaN or infinite.
template <typename T>
void ensure_finite(const Tensor<T>& t, const std::string& what);

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>::current().backward(loss);
}

template <typename T>
Tensor<T> cast_tensor(const Tensor<float>& src);

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gama
