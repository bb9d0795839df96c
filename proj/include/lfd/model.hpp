#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfd/arch.hpp"
#include "lfd/ops.hpp"
#include "lfd/tensor.hpp"

namespace lfd {

template <typename T>
struct ConvBlock {
  Tensor<T> weight;  // out×in×k×k
  Tensor<T> bias;
  BatchNormState<T> bn;
};

// 1×1 convolution producing per-location class logits.
template <typename T>
struct SegHead {
  Tensor<T> weight;  // classes×C×1×1
  Tensor<T> bias;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
class Model {
 public:
  ArchConfig config;
  ReceptiveFieldInfo rf;
  std::vector<ConvBlock<T>> blocks;
  std::vector<SegHead<T>> seg_heads;
  Tensor<T> cls_weight;  // classes×C
  Tensor<T> cls_bias;

  // Learnable tensors in a fixed order (the optimizer and checkpoints rely on it).
  std::vector<NamedTensor<T>> parameters() const;
  void zero_grad();
  // Copies share parameter storage; clone() does not.
  Model clone() const;
};

template <typename T>
struct ForwardOutput {
  std::vector<Tensor<T>> seg_logits;  // one N×2×G_h×G_w per head
  Tensor<T> image_logits;             // N×2
  GridDims grid;
};

// He-uniform weights, zero biases, gamma=1/beta=0; deterministic in `seed`.
template <typename T>
Model<T> build_model(const ArchConfig& config, std::uint64_t seed);

// Train mode requires H = W = config.input_size and updates batch-norm running
// statistics. Returns logits, not probabilities.
template <typename T>
ForwardOutput<T> forward(Model<T>& model, const Tensor<T>& images, Mode mode,
                         Tape<T>* tape = nullptr);

// Eval-mode forward that leaves the model untouched; any H, W >= 33.
template <typename T>
ForwardOutput<T> forward_eval(const Model<T>& model, const Tensor<T>& images);

// Learnable scalars: conv/affine weights and biases, gamma and beta.
template <typename T>
std::int64_t param_count(const Model<T>& model);

}  // namespace lfd
