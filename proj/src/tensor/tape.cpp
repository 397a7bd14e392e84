#include <cmath>
#include <sstream>

#include "gama/tensor.hpp"

namespace gama {

namespace {
thread_local bool t_grad_enabled = true;
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw Error("tensor dimensions must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Tape<T>& Tape<T>::current() {
  thread_local Tape<T> tape;
  return tape;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw Error("backward: loss must be a scalar tensor");
  if (!loss.requires_grad() || loss.is_leaf())
    throw Error("backward: loss is detached from the tape");
  std::size_t end = ops_.size();
  while (end > 0 && ops_[end - 1] != loss.node()) --end;
  if (end == 0) throw Error("backward: loss is detached from the tape");
  if (!std::isfinite(static_cast<double>(loss.item())))
    throw Error("backward: non-finite loss");

  loss.node()->grad_buffer()[0] += T(1);
  for (std::size_t i = end; i-- > 0;) {
    auto& node = *ops_[i];
    if (!node.grad.empty() && node.backward) node.backward(node);
  }
  for (auto& node : ops_) {
    node->backward = nullptr;
    node->grad.clear();
  }
  ops_.clear();
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  auto node = std::make_shared<detail::Node<T>>();
  node->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, const std::vector<T>& data) {
  return from_buffer(std::move(shape), Buffer<T>(data.begin(), data.end()));
}

template <typename T>
Tensor<T> Tensor<T>::from_buffer(Shape shape, Buffer<T> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw Error("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                shape_str(shape));
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw Error("set_requires_grad: only leaf tensors can be toggled");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw Error("item(): tensor has " + std::to_string(numel()) + " elements");
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<int64_t> index) const {
  if (index.size() != ndim()) throw Error("at(): index rank mismatch");
  int64_t flat = 0;
  std::size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= node_->shape[axis]) throw Error("at(): index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from_buffer(node_->shape, node_->data);
}

template <typename T>
Eigen::Map<typename Tensor<T>::RowMatrix> Tensor<T>::matrix() {
  if (ndim() != 2) throw Error("matrix(): tensor is not 2-d, shape " + shape_str(shape()));
  return Eigen::Map<RowMatrix>(ptr(), dim(0), dim(1));
}

template <typename T>
Eigen::Map<const typename Tensor<T>::RowMatrix> Tensor<T>::matrix() const {
  if (ndim() != 2) throw Error("matrix(): tensor is not 2-d, shape " + shape_str(shape()));
  return Eigen::Map<const RowMatrix>(ptr(), dim(0), dim(1));
}

template <typename T>
void ensure_finite(const Tensor<T>& t, const std::string& what) {
  for (T v : t.data())
    if (!std::isfinite(static_cast<double>(v))) throw Error(what + ": non-finite value");
  for (T v : t.grad())
    if (!std::isfinite(static_cast<double>(v))) throw Error(what + ": non-finite gradient");
}

template <typename T>
Tensor<T> cast_tensor(const Tensor<float>& src) {
  return Tensor<T>::from_buffer(src.shape(), Buffer<T>(src.vec().begin(), src.vec().end()));
}

template class Tape<float>;
template class Tape<double>;
template class Tensor<float>;
template class Tensor<double>;
template void ensure_finite(const Tensor<float>&, const std::string&);
template void ensure_finite(const Tensor<double>&, const std::string&);
template Tensor<float> cast_tensor<float>(const Tensor<float>&);
template Tensor<double> cast_tensor<double>(const Tensor<float>&);

}  // namespace gama
