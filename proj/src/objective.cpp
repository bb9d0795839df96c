#include "lfd/objective.hpp"

#include <cmath>
#include <sstream>

#include "lfd/errors.hpp"
#include "lfd/ops.hpp"

namespace lfd {

void validate_weights(const LossWeights& weights) {
  auto check_range = [](double v, const std::string& name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream msg;
      msg << name << " = " << v << " is outside [0, 1]";
      throw ConfigError(msg.str());
    }
  };
  check_range(weights.lambda_cls, "lambda_cls");
  double sum = weights.lambda_cls;
  for (std::size_t k = 0; k < weights.lambda_seg.size(); ++k) {
    check_range(weights.lambda_seg[k], "lambda_seg[" + std::to_string(k) + "]");
    sum += weights.lambda_seg[k];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "loss weights must sum to 1, got " << sum;
    throw ConfigError(msg.str());
  }
}

SegLabelGrid extract_seg_labels(const Mask& mask, const ReceptiveFieldInfo& rf, GridDims grid) {
  const auto offset = static_cast<std::int64_t>(std::floor(rf.center_offset()));
  const auto jump = rf.jump();
  const auto last_row = offset + jump * (grid.rows - 1);
  const auto last_col = offset + jump * (grid.cols - 1);
  if (grid.rows <= 0 || grid.cols <= 0 || last_row >= mask.height || last_col >= mask.width) {
    throw DimensionError("mask " + std::to_string(mask.height) + "x" +
                         std::to_string(mask.width) + " does not cover grid " +
                         std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                         " (needs rows/cols up to " + std::to_string(last_row) + "/" +
                         std::to_string(last_col) + ")");
  }
  SegLabelGrid out{grid, std::vector<std::int32_t>(static_cast<std::size_t>(grid.rows * grid.cols))};
  for (std::int64_t i = 0; i < grid.rows; ++i) {
    for (std::int64_t j = 0; j < grid.cols; ++j) {
      out.labels[static_cast<std::size_t>(i * grid.cols + j)] =
          mask.at(offset + jump * i, offset + jump * j);
    }
  }
  return out;
}

template <typename T>
Tensor<T> seg_loss(const Tensor<T>& seg_logits, std::span<const SegLabelGrid> labels,
                   Tape<T>* tape) {
  if (seg_logits.rank() != 4 || static_cast<std::size_t>(seg_logits.dim(0)) != labels.size()) {
    throw DimensionError("seg_loss: logits " + shape_str(seg_logits.shape()) + " with " +
                         std::to_string(labels.size()) + " label grids");
  }
  const GridDims grid{seg_logits.dim(2), seg_logits.dim(3)};
  std::vector<std::int32_t> flat;
  flat.reserve(static_cast<std::size_t>(seg_logits.dim(0) * grid.rows * grid.cols));
  for (const auto& g : labels) {
    if (g.dims != grid) {
      throw DimensionError("seg_loss: label grid " + std::to_string(g.dims.rows) + "x" +
                           std::to_string(g.dims.cols) + " vs logits grid " +
                           std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
    }
    flat.insert(flat.end(), g.labels.begin(), g.labels.end());
  }
  // Equal grid sizes make the global mean equal to the mean of per-sample means.
  return cross_entropy(seg_logits, std::span<const std::int32_t>(flat), tape);
}

template <typename T>
Tensor<T> cls_loss(const Tensor<T>& image_logits, std::span<const std::int32_t> labels,
                   Tape<T>* tape) {
  if (image_logits.rank() != 2) {
    throw DimensionError("cls_loss expects N×2 logits, got " + shape_str(image_logits.shape()));
  }
  return cross_entropy(image_logits, labels, tape);
}

template <typename T>
Tensor<T> joint_loss(const LossWeights& weights, const Tensor<T>& cls,
                     std::span<const Tensor<T>> segs, Tape<T>* tape) {
  if (segs.size() != weights.lambda_seg.size()) {
    throw DimensionError("joint_loss: " + std::to_string(segs.size()) + " seg terms for " +
                         std::to_string(weights.lambda_seg.size()) + " seg weights");
  }
  std::vector<T> coefs{static_cast<T>(weights.lambda_cls)};
  std::vector<Tensor<T>> terms{cls};
  for (std::size_t k = 0; k < segs.size(); ++k) {
    coefs.push_back(static_cast<T>(weights.lambda_seg[k]));
    terms.push_back(segs[k]);
  }
  return weighted_sum(std::span<const T>(coefs), std::span<const Tensor<T>>(terms), tape);
}

#define LFD_INSTANTIATE_OBJECTIVE(T)                                                        \
  template Tensor<T> seg_loss(const Tensor<T>&, std::span<const SegLabelGrid>, Tape<T>*);   \
  template Tensor<T> cls_loss(const Tensor<T>&, std::span<const std::int32_t>, Tape<T>*);   \
  template Tensor<T> joint_loss(const LossWeights&, const Tensor<T>&,                       \
                                std::span<const Tensor<T>>, Tape<T>*);

LFD_INSTANTIATE_OBJECTIVE(float)
LFD_INSTANTIATE_OBJECTIVE(double)
LFD_INSTANTIATE_OBJECTIVE(long double)

}  // namespace lfd
