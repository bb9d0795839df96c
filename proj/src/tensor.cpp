#include "lfd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lfd/errors.hpp"

namespace lfd {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= e;
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

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
  const auto n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->values.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
  const auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->values.assign(values.begin(), values.end());
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), T{0});
  return impl_->grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), T{0});
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(impl_->shape);
  out.impl_->values = impl_->values;
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(impl_->values.begin(), impl_->values.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  const T seed[] = {T{1}};
  backward(loss, std::span<const T>(seed), tape);
}

template <typename T>
void backward(Tensor<T>& output, std::span<const T> upstream, Tape<T>& tape) {
  if (static_cast<std::int64_t>(upstream.size()) != output.numel()) {
    throw ContractError("backward: upstream gradient size does not match output " +
                        shape_str(output.shape()));
  }
  auto g = output.grad();
  for (std::size_t i = 0; i < upstream.size(); ++i) g[i] += upstream[i];
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) (*it)();
  tape.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(Tensor<float>&, Tape<float>&);
template void backward<double>(Tensor<double>&, Tape<double>&);
template void backward<float>(Tensor<float>&, std::span<const float>, Tape<float>&);
template void backward<double>(Tensor<double>&, std::span<const double>, Tape<double>&);
template class Tensor<long double>;
template void backward<long double>(Tensor<long double>&, Tape<long double>&);
template void backward<long double>(Tensor<long double>&, std::span<const long double>,
                                   Tape<long double>&);

}  // namespace lfd
