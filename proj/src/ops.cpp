#include "lfd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lfd/errors.hpp"

namespace lfd {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
  }
}

template <typename T>
bool needs_tape(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>* t) { return t->requires_grad(); });
}

// The forward GEMM runs over fixed-width column chunks so that its blocking,
// and therefore the summation order of every output location, does not depend
// on the image size. This makes conv outputs bitwise translation covariant.
constexpr std::int64_t kColumnPanel = 96;

struct ConvGeometry {
  std::int64_t channels, height, width, kernel, out_h, out_w;
  std::int64_t rows() const { return channels * kernel * kernel; }
  std::int64_t cols() const { return out_h * out_w; }
  std::int64_t padded_cols() const {
    return (cols() + kColumnPanel - 1) / kColumnPanel * kColumnPanel;
  }
};

// Unfolds one C×H×W image into a (C·k·k)×(Ho·Wo) matrix with leading dimension ld.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col, std::int64_t ld) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        T* dst = col + ((c * g.kernel + ky) * g.kernel + kx) * ld;
        const T* src = image + (c * g.height + ky) * g.width + kx;
        for (std::int64_t y = 0; y < g.out_h; ++y) {
          std::copy_n(src + y * g.width, g.out_w, dst + y * g.out_w);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image, std::int64_t ld) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        const T* src = col + ((c * g.kernel + ky) * g.kernel + kx) * ld;
        T* dst = image + (c * g.height + ky) * g.width + kx;
        for (std::int64_t y = 0; y < g.out_h; ++y) {
          const T* s = src + y * g.out_w;
          T* d = dst + y * g.width;
          for (std::int64_t x = 0; x < g.out_w; ++x) d[x] += s[x];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BatchNormState<T>::BatchNormState(std::int64_t channels, T eps, T mom)
    : gamma(Shape{channels}, T{1}),
      beta(Shape{channels}, T{0}),
      running_mean(static_cast<std::size_t>(channels), T{0}),
      running_var(static_cast<std::size_t>(channels), T{1}),
      epsilon(eps),
      momentum(mom) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

template <typename T>
Tensor<T> conv2d_valid(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                       Tape<T>* tape) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  require_rank(bias, 1, "conv2d bias");
  const auto batch = input.dim(0);
  const auto out_c = weight.dim(0);
  const auto k = weight.dim(2);
  if (weight.dim(1) != input.dim(1) || weight.dim(3) != k || bias.dim(0) != out_c) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  if (k > input.dim(2) || k > input.dim(3)) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + " exceeds input " +
                         shape_str(input.shape()));
  }
  const ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), k, input.dim(2) - k + 1,
                       input.dim(3) - k + 1};
  Tensor<T> out(Shape{batch, out_c, g.out_h, g.out_w});

  const auto ld = g.padded_cols();
  AlignedVector<T> col(static_cast<std::size_t>(g.rows() * ld), T{0});
  AlignedVector<T> result(static_cast<std::size_t>(out_c * ld));
  ConstMatMap<T> w(weight.data(), out_c, g.rows());
  const std::int64_t in_stride = g.channels * g.height * g.width;
  const std::int64_t out_stride = out_c * g.cols();
  for (std::int64_t n = 0; n < batch; ++n) {
    im2col(input.data() + n * in_stride, g, col.data(), ld);
    MatMap<T> y(result.data(), out_c, ld);
    ConstMatMap<T> cols(col.data(), g.rows(), ld);
    for (std::int64_t s = 0; s < ld; s += kColumnPanel) {
      y.middleCols(s, kColumnPanel).noalias() = w * cols.middleCols(s, kColumnPanel);
    }
    for (std::int64_t o = 0; o < out_c; ++o) {
      const T* src = result.data() + o * ld;
      T* dst = out.data() + n * out_stride + o * g.cols();
      for (std::int64_t p = 0; p < g.cols(); ++p) dst[p] = src[p] + bias[o];
    }
  }
  check_finite(out, "conv2d_valid");

  if (needs_tape(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record([input = input, weight = weight, bias = bias, out, g, batch, out_c, in_stride,
                  out_stride]() mutable {
      const auto p = g.cols();
      AlignedVector<T> col(static_cast<std::size_t>(g.rows() * p));
      AlignedVector<T> dcol(static_cast<std::size_t>(g.rows() * p));
      ConstMatMap<T> w(weight.data(), out_c, g.rows());
      for (std::int64_t n = 0; n < batch; ++n) {
        ConstMatMap<T> dy(out.grad().data() + n * out_stride, out_c, p);
        if (weight.requires_grad()) {
          im2col(input.data() + n * in_stride, g, col.data(), p);
          MatMap<T> dw(weight.grad().data(), out_c, g.rows());
          dw.noalias() += dy * ConstMatMap<T>(col.data(), g.rows(), p).transpose();
        }
        if (bias.requires_grad()) {
          auto db = bias.grad();
          for (std::int64_t o = 0; o < out_c; ++o) db[o] += dy.row(o).sum();
        }
        if (input.requires_grad()) {
          MatMap<T> dc(dcol.data(), g.rows(), p);
          dc.noalias() = w.transpose() * dy;
          col2im_add(dcol.data(), g, input.grad().data() + n * in_stride, p);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::int64_t kernel, std::int64_t stride,
                    Tape<T>* tape) {
  require_rank(input, 4, "maxpool2d input");
  if (kernel < 1 || stride < 1) throw DimensionError("maxpool2d: kernel and stride must be >= 1");
  const auto batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel > h || kernel > w) {
    throw DimensionError("maxpool2d: kernel " + std::to_string(kernel) + " exceeds input " +
                         shape_str(input.shape()));
  }
  const auto oh = (h - kernel) / stride + 1;
  const auto ow = (w - kernel) / stride + 1;
  Tensor<T> out(Shape{batch, channels, oh, ow});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
  std::int64_t o = 0;
  for (std::int64_t plane = 0; plane < batch * channels; ++plane) {
    const T* src = input.data() + plane * h * w;
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t x = 0; x < ow; ++x, ++o) {
        std::int64_t best = (y * stride) * w + x * stride;
        for (std::int64_t ky = 0; ky < kernel; ++ky) {
          for (std::int64_t kx = 0; kx < kernel; ++kx) {
            const auto idx = (y * stride + ky) * w + x * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        out[o] = src[best];
        argmax[static_cast<std::size_t>(o)] = plane * h * w + best;
      }
    }
  }
  check_finite(out, "maxpool2d");
  if (needs_tape(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([input = input, out, argmax = std::move(argmax)]() mutable {
      auto dx = input.grad();
      auto dy = out.grad();
      for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape) {
  Tensor<T> out(input.shape());
  const auto n = input.numel();
  for (std::int64_t i = 0; i < n; ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
  check_finite(out, "relu");
  if (needs_tape(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([input = input, out, n]() mutable {
      auto dx = input.grad();
      auto dy = out.grad();
      for (std::int64_t i = 0; i < n; ++i) {
        if (out[i] > T{0}) dx[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BatchNormState<T>& state, Mode mode,
                      Tape<T>* tape) {
  require_rank(input, 4, "batchnorm2d input");
  const auto batch = input.dim(0), channels = input.dim(1);
  const auto plane = input.dim(2) * input.dim(3);
  if (channels != state.channels()) {
    throw DimensionError("batchnorm2d: input has " + std::to_string(channels) +
                         " channels, state has " + std::to_string(state.channels()));
  }
  const auto count = batch * plane;
  std::vector<T> mean(static_cast<std::size_t>(channels));
  std::vector<T> inv_std(static_cast<std::size_t>(channels));
  if (mode == Mode::kTrain) {
    for (std::int64_t c = 0; c < channels; ++c) {
      T sum{0};
      for (std::int64_t n = 0; n < batch; ++n) {
        const T* p = input.data() + (n * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) sum += p[i];
      }
      const T mu = sum / static_cast<T>(count);
      T sq{0};
      for (std::int64_t n = 0; n < batch; ++n) {
        const T* p = input.data() + (n * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const T var = sq / static_cast<T>(count);
      mean[c] = mu;
      inv_std[c] = T{1} / std::sqrt(var + state.epsilon);
      // Running variance tracks the unbiased estimate, as is conventional.
      const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
      state.running_mean[c] = (T{1} - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] =
          (T{1} - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (std::int64_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = T{1} / std::sqrt(state.running_var[c] + state.epsilon);
    }
  }

  Tensor<T> out(input.shape());
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const T scale = state.gamma[c] * inv_std[c];
      const T shift = state.beta[c] - mean[c] * scale;
      const T* p = input.data() + (n * channels + c) * plane;
      T* q = out.data() + (n * channels + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) q[i] = p[i] * scale + shift;
    }
  }
  check_finite(out, "batchnorm2d");

  if (needs_tape(tape, {&input, &state.gamma, &state.beta})) {
    out.set_requires_grad(true);
    tape->record([input = input, out, gamma = state.gamma, beta = state.beta, mean = std::move(mean),
                  inv_std = std::move(inv_std), batch, channels, plane, count,
                  train = mode == Mode::kTrain]() mutable {
      auto dy = out.grad();
      for (std::int64_t c = 0; c < channels; ++c) {
        T sum_dy{0}, sum_dy_xhat{0};
        for (std::int64_t n = 0; n < batch; ++n) {
          const auto base = (n * channels + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const T xhat = (input[base + i] - mean[c]) * inv_std[c];
            sum_dy += dy[base + i];
            sum_dy_xhat += dy[base + i] * xhat;
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += sum_dy_xhat;
        if (beta.requires_grad()) beta.grad()[c] += sum_dy;
        if (!input.requires_grad()) continue;
        auto dx = input.grad();
        const T g = gamma[c] * inv_std[c];
        if (train) {
          const T m = static_cast<T>(count);
          for (std::int64_t n = 0; n < batch; ++n) {
            const auto base = (n * channels + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              const T xhat = (input[base + i] - mean[c]) * inv_std[c];
              dx[base + i] += g * (dy[base + i] - sum_dy / m - xhat * sum_dy_xhat / m);
            }
          }
        } else {
          for (std::int64_t n = 0; n < batch; ++n) {
            const auto base = (n * channels + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dx[base + i] += g * dy[base + i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input, Tape<T>* tape) {
  require_rank(input, 4, "global_avg_pool input");
  const auto batch = input.dim(0), channels = input.dim(1);
  const auto plane = input.dim(2) * input.dim(3);
  Tensor<T> out(Shape{batch, channels});
  for (std::int64_t i = 0; i < batch * channels; ++i) {
    const T* p = input.data() + i * plane;
    T sum{0};
    for (std::int64_t j = 0; j < plane; ++j) sum += p[j];
    out[i] = sum / static_cast<T>(plane);
  }
  check_finite(out, "global_avg_pool");
  if (needs_tape(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([input = input, out, batch, channels, plane]() mutable {
      auto dx = input.grad();
      auto dy = out.grad();
      for (std::int64_t i = 0; i < batch * channels; ++i) {
        const T g = dy[i] / static_cast<T>(plane);
        for (std::int64_t j = 0; j < plane; ++j) dx[i * plane + j] += g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> affine(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Tape<T>* tape) {
  require_rank(input, 2, "affine input");
  require_rank(weight, 2, "affine weight");
  require_rank(bias, 1, "affine bias");
  const auto n = input.dim(0), c = input.dim(1), k = weight.dim(0);
  if (weight.dim(1) != c || bias.dim(0) != k) {
    throw DimensionError("affine: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  Tensor<T> out(Shape{n, k});
  ConstMatMap<T> x(input.data(), n, c);
  ConstMatMap<T> w(weight.data(), k, c);
  MatMap<T> y(out.data(), n, k);
  y.noalias() = x * w.transpose();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < k; ++j) y(i, j) += bias[j];
  }
  check_finite(out, "affine");
  if (needs_tape(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record([input = input, weight = weight, bias = bias, out, n, c, k]() mutable {
      ConstMatMap<T> dy(out.grad().data(), n, k);
      if (input.requires_grad()) {
        MatMap<T> dx(input.grad().data(), n, c);
        dx.noalias() += dy * ConstMatMap<T>(weight.data(), k, c);
      }
      if (weight.requires_grad()) {
        MatMap<T> dw(weight.grad().data(), k, c);
        dw.noalias() += dy.transpose() * ConstMatMap<T>(input.data(), n, c);
      }
      if (bias.requires_grad()) {
        auto db = bias.grad();
        for (std::int64_t j = 0; j < k; ++j) db[j] += dy.col(j).sum();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input, std::size_t axis) {
  if (axis >= input.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(input.shape()));
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= input.dim(a);
  for (std::size_t a = axis + 1; a < input.rank(); ++a) inner *= input.dim(a);
  const auto len = input.dim(axis);
  Tensor<T> out(input.shape());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const auto base = o * len * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t j = 0; j < len; ++j) mx = std::max(mx, input[base + j * inner]);
      T sum{0};
      for (std::int64_t j = 0; j < len; ++j) {
        const T e = std::exp(input[base + j * inner] - mx);
        out[base + j * inner] = e;
        sum += e;
      }
      for (std::int64_t j = 0; j < len; ++j) out[base + j * inner] /= sum;
    }
  }
  check_finite(out, "softmax");
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels,
                        Tape<T>* tape) {
  if (!logits.defined() || logits.rank() < 2) {
    throw DimensionError("cross_entropy: logits need rank >= 2");
  }
  const auto batch = logits.dim(0), classes = logits.dim(1);
  std::int64_t inner = 1;
  for (std::size_t a = 2; a < logits.rank(); ++a) inner *= logits.dim(a);
  const auto positions = batch * inner;
  if (static_cast<std::int64_t>(labels.size()) != positions) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(positions) + " positions of logits " +
                         shape_str(logits.shape()));
  }
  for (auto l : labels) {
    if (l < 0 || l >= classes) {
      throw DimensionError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                           std::to_string(classes) + ")");
    }
  }
  // Per-position max and log-sum-exp; kept for the backward pass.
  std::vector<T> shift(static_cast<std::size_t>(positions));
  T total{0};
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const auto base = n * classes * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t c = 0; c < classes; ++c) mx = std::max(mx, logits[base + c * inner]);
      T sum{0};
      for (std::int64_t c = 0; c < classes; ++c) sum += std::exp(logits[base + c * inner] - mx);
      const T lse = mx + std::log(sum);
      const auto p = n * inner + i;
      shift[static_cast<std::size_t>(p)] = lse;
      total += lse - logits[base + labels[p] * inner];
    }
  }
  Tensor<T> out(Shape{1}, total / static_cast<T>(positions));
  check_finite(out, "cross_entropy");
  if (needs_tape(tape, {&logits})) {
    out.set_requires_grad(true);
    tape->record([logits = logits, out, shift = std::move(shift),
                  labels = std::vector<std::int32_t>(labels.begin(), labels.end()), batch, classes,
                  inner, positions]() mutable {
      const T g = out.grad()[0] / static_cast<T>(positions);
      auto dx = logits.grad();
      for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t i = 0; i < inner; ++i) {
          const auto base = n * classes * inner + i;
          const auto p = n * inner + i;
          for (std::int64_t c = 0; c < classes; ++c) {
            const T prob = std::exp(logits[base + c * inner] - shift[p]);
            dx[base + c * inner] += g * (prob - (c == labels[p] ? T{1} : T{0}));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_sum(std::span<const T> coefs, std::span<const Tensor<T>> terms,
                       Tape<T>* tape) {
  if (coefs.size() != terms.size() || terms.empty()) {
    throw DimensionError("weighted_sum: " + std::to_string(coefs.size()) + " coefficients for " +
                         std::to_string(terms.size()) + " terms");
  }
  T total{0};
  bool any_grad = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    total += coefs[i] * terms[i].item();
    any_grad = any_grad || terms[i].requires_grad();
  }
  Tensor<T> out(Shape{1}, total);
  check_finite(out, "weighted_sum");
  if (tape != nullptr && any_grad) {
    out.set_requires_grad(true);
    tape->record([out, coefs = std::vector<T>(coefs.begin(), coefs.end()),
                  terms = std::vector<Tensor<T>>(terms.begin(), terms.end())]() mutable {
      const T g = out.grad()[0];
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].requires_grad()) terms[i].grad()[0] += coefs[i] * g;
      }
    });
  }
  return out;
}

#define LFD_INSTANTIATE_OPS(T)                                                                   \
  template struct BatchNormState<T>;                                                             \
  template Tensor<T> conv2d_valid(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                  Tape<T>*);                                                     \
  template Tensor<T> maxpool2d(const Tensor<T>&, std::int64_t, std::int64_t, Tape<T>*);          \
  template Tensor<T> relu(const Tensor<T>&, Tape<T>*);                                           \
  template Tensor<T> batchnorm2d(const Tensor<T>&, BatchNormState<T>&, Mode, Tape<T>*);          \
  template Tensor<T> global_avg_pool(const Tensor<T>&, Tape<T>*);                                \
  template Tensor<T> affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tape<T>*);     \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>, Tape<T>*);   \
  template Tensor<T> weighted_sum(std::span<const T>, std::span<const Tensor<T>>, Tape<T>*);

LFD_INSTANTIATE_OPS(float)
LFD_INSTANTIATE_OPS(double)
LFD_INSTANTIATE_OPS(long double)

}  // namespace lfd
