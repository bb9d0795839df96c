#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lfd {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);

// 64-byte aligned storage. Vectorized reductions split work by pointer
// alignment, so pinning it makes every result a function of shapes alone.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;
std::string shape_str(const Shape& shape);

// Dense row-major tensor. Copies are handles onto the same storage, which is
// what lets the tape refer back to activations; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->values.size()); }

  std::span<T> values() { return impl_->values; }
  std::span<const T> values() const { return impl_->values; }
  T* data() { return impl_->values.data(); }
  const T* data() const { return impl_->values.data(); }
  T& operator[](std::int64_t i) { return impl_->values[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return impl_->values[static_cast<std::size_t>(i)]; }
  T item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  // Gradient accumulator; allocated (zeroed) on first access.
  std::span<T> grad();
  std::span<const T> grad() const;
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  Tensor clone() const;
  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

 private:
  struct Impl {
    Shape shape;
    AlignedVector<T> values;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Ordered record of executed differentiable ops. Each entry propagates the
// output gradient of one op into its inputs.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

 private:
  template <typename U>
  friend void backward(Tensor<U>& output, std::span<const U> upstream, Tape<U>& tape);
  std::vector<BackwardFn> entries_;
};

// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
// into every requires_grad tensor. The tape is consumed.
template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape);

// Vector-Jacobian product: accumulates `upstream` into output's gradient and
// replays the tape. The tape is consumed.
template <typename T>
void backward(Tensor<T>& output, std::span<const T> upstream, Tape<T>& tape);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward<float>(Tensor<float>&, Tape<float>&);
extern template void backward<double>(Tensor<double>&, Tape<double>&);
extern template void backward<float>(Tensor<float>&, std::span<const float>, Tape<float>&);
extern template void backward<double>(Tensor<double>&, std::span<const double>, Tape<double>&);
extern template class Tensor<long double>;
extern template void backward<long double>(Tensor<long double>&, Tape<long double>&);
extern template void backward<long double>(Tensor<long double>&, std::span<const long double>,
                                          Tape<long double>&);

}  // namespace lfd
