#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lfd {

inline constexpr std::int64_t kRequiredReceptiveField = 33;

// Layer stack: `conv_kernels.size()` stride-1 valid convolutions, each
// followed by ReLU and batch norm, with one max-pool inserted after the first
// `pool_position` of them. Segmentation heads are 1×1 convolutions on the
// final feature map; the image head is GAP followed by an affine layer.
struct ArchConfig {
  std::int64_t input_size = 128;
  std::int64_t in_channels = 3;
  std::vector<std::int64_t> conv_kernels{3, 3, 3, 3, 3, 3, 3, 3};
  std::vector<std::int64_t> conv_channels{32, 64, 96, 96, 128, 128, 160, 160};
  std::int64_t pool_position = 1;
  std::int64_t pool_kernel = 3;
  std::int64_t pool_stride = 2;
  std::int64_t num_seg_heads = 1;
  std::int64_t num_classes = 2;
  // Skips the 8-conv / stride-2 / RF-33 checks (used for small test nets).
  bool override_constraints = false;

  bool operator==(const ArchConfig&) const = default;
};

struct LayerReceptiveField {
  std::string name;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t rf_size = 1;
  std::int64_t jump = 1;
  double center_offset = 0.0;  // input coordinate of the RF center of output 0
};

struct ReceptiveFieldInfo {
  std::vector<LayerReceptiveField> layers;

  const LayerReceptiveField& final_layer() const { return layers.back(); }
  std::int64_t rf_size() const { return final_layer().rf_size; }
  std::int64_t jump() const { return final_layer().jump; }
  double center_offset() const { return final_layer().center_offset; }
};

// rf' = rf + (k-1)·jump, jump' = jump·stride, center' = center + (k-1)/2·jump,
// starting from rf=1, jump=1, center=0.
ReceptiveFieldInfo receptive_field(const ArchConfig& config);

// Throws ConfigError describing the first violated invariant.
void validate(const ArchConfig& config);

struct GridDims {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  bool operator==(const GridDims&) const = default;
};

// Spatial extent of the final feature map; DimensionError when the input is
// too small for the stack.
GridDims output_grid(const ArchConfig& config, std::int64_t height, std::int64_t width);
inline GridDims output_grid(const ArchConfig& config, std::int64_t size) {
  return output_grid(config, size, size);
}

}  // namespace lfd
