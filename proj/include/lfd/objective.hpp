#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lfd/arch.hpp"
#include "lfd/maskgen.hpp"
#include "lfd/tensor.hpp"

namespace lfd {

// Convex combination of one classification term and k segmentation terms.
struct LossWeights {
  double lambda_cls = 1.0;
  std::vector<double> lambda_seg;

  std::size_t num_seg() const { return lambda_seg.size(); }
};

// Each weight in [0, 1] and all weights summing to 1 within 1e-9; throws
// ConfigError otherwise.
void validate_weights(const LossWeights& weights);

// Per-location class labels of one sample, row-major over the output grid.
struct SegLabelGrid {
  GridDims dims;
  std::vector<std::int32_t> labels;

  std::int32_t at(std::int64_t i, std::int64_t j) const {
    return labels[static_cast<std::size_t>(i * dims.cols + j)];
  }
};

// Samples the mask at the receptive-field center of every grid location:
// label(i, j) = mask[offset + jump·i][offset + jump·j]. A half-pixel center
// offset (even kernels) is rounded down.
SegLabelGrid extract_seg_labels(const Mask& mask, const ReceptiveFieldInfo& rf, GridDims grid);

// Mean cross-entropy over every grid location of every sample.
// logits N×2×G_h×G_w, one label grid per sample.
template <typename T>
Tensor<T> seg_loss(const Tensor<T>& seg_logits, std::span<const SegLabelGrid> labels,
                   Tape<T>* tape = nullptr);

// Mean cross-entropy of the image head. logits N×2.
template <typename T>
Tensor<T> cls_loss(const Tensor<T>& image_logits, std::span<const std::int32_t> labels,
                   Tape<T>* tape = nullptr);

// lambda_cls·cls + Σ_k lambda_seg[k]·segs[k].
template <typename T>
Tensor<T> joint_loss(const LossWeights& weights, const Tensor<T>& cls,
                     std::span<const Tensor<T>> segs, Tape<T>* tape = nullptr);

}  // namespace lfd
