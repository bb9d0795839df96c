#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lfd/tensor.hpp"

namespace lfd {

enum class Mode { kTrain, kEval };

template <typename T>
struct BatchNormState {
  explicit BatchNormState(std::int64_t channels, T epsilon = T(1e-5), T momentum = T(0.1));

  std::int64_t channels() const { return gamma.numel(); }

  Tensor<T> gamma;  // learnable, init 1
  Tensor<T> beta;   // learnable, init 0
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T epsilon;
  T momentum;
};

// All ops below record themselves on `tape` when it is non-null and at least
// one input requires a gradient. Outputs are checked for NaN/Inf.

// Stride-1, unpadded cross-correlation. input N×C×H×W, weight O×C×k×k, bias O.
template <typename T>
Tensor<T> conv2d_valid(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                       Tape<T>* tape = nullptr);

// Gradient goes to the first row-major maximum of each window.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::int64_t kernel, std::int64_t stride,
                    Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape = nullptr);

// Train mode normalizes with batch statistics over N×H×W and updates the
// running statistics; eval mode uses the running statistics only.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BatchNormState<T>& state, Mode mode,
                      Tape<T>* tape = nullptr);

// N×C×H×W -> N×C spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input, Tape<T>* tape = nullptr);

// input N×C, weight K×C, bias K -> N×K.
template <typename T>
Tensor<T> affine(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Tape<T>* tape = nullptr);

// Not differentiable; used for inference outputs.
template <typename T>
Tensor<T> softmax(const Tensor<T>& input, std::size_t axis);

// Mean over all positions of -log softmax(logits)[label]. The class axis is 1;
// positions are ordered batch-major, then any trailing spatial axes.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels,
                        Tape<T>* tape = nullptr);

// sum_i coefs[i] * terms[i] over scalar tensors.
template <typename T>
Tensor<T> weighted_sum(std::span<const T> coefs, std::span<const Tensor<T>> terms,
                       Tape<T>* tape = nullptr);

}  // namespace lfd
