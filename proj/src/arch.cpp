#include "lfd/arch.hpp"

#include <string>

#include "lfd/errors.hpp"

namespace lfd {
namespace {

void check_shape(const ArchConfig& c) {
  if (c.conv_kernels.empty()) throw ConfigError("architecture needs at least one conv layer");
  if (c.conv_kernels.size() != c.conv_channels.size()) {
    throw ConfigError("conv_kernels has " + std::to_string(c.conv_kernels.size()) +
                      " entries but conv_channels has " + std::to_string(c.conv_channels.size()));
  }
  for (std::size_t i = 0; i < c.conv_kernels.size(); ++i) {
    if (c.conv_kernels[i] < 1 || c.conv_channels[i] < 1) {
      throw ConfigError("conv layer " + std::to_string(i + 1) + " has a non-positive extent");
    }
  }
  const auto n = static_cast<std::int64_t>(c.conv_kernels.size());
  if (c.pool_position < 0 || c.pool_position > n) {
    throw ConfigError("pool_position " + std::to_string(c.pool_position) + " outside [0, " +
                      std::to_string(n) + "]");
  }
  if (c.pool_kernel < 1 || c.pool_stride < 1) throw ConfigError("pool kernel/stride must be >= 1");
  if (c.in_channels < 1 || c.input_size < 1) throw ConfigError("non-positive input extent");
  if (c.num_seg_heads < 0) throw ConfigError("num_seg_heads must be >= 0");
  if (c.num_classes != 2) throw ConfigError("num_classes must be 2 (real, fake)");
}

}  // namespace

ReceptiveFieldInfo receptive_field(const ArchConfig& config) {
  check_shape(config);
  ReceptiveFieldInfo info;
  std::int64_t rf = 1, jump = 1;
  double center = 0.0;
  auto push = [&](std::string name, std::int64_t k, std::int64_t s) {
    rf += (k - 1) * jump;
    center += static_cast<double>(k - 1) / 2.0 * static_cast<double>(jump);
    jump *= s;
    info.layers.push_back({std::move(name), k, s, rf, jump, center});
  };
  for (std::size_t i = 0; i < config.conv_kernels.size(); ++i) {
    if (static_cast<std::int64_t>(i) == config.pool_position) {
      push("pool", config.pool_kernel, config.pool_stride);
    }
    push("conv" + std::to_string(i + 1), config.conv_kernels[i], 1);
  }
  if (config.pool_position == static_cast<std::int64_t>(config.conv_kernels.size())) {
    push("pool", config.pool_kernel, config.pool_stride);
  }
  return info;
}

void validate(const ArchConfig& config) {
  check_shape(config);
  if (config.override_constraints) return;
  if (config.conv_kernels.size() != 8) {
    throw ConfigError("expected 8 conv layers, got " + std::to_string(config.conv_kernels.size()));
  }
  if (config.pool_stride != 2) {
    throw ConfigError("pool stride must be 2, got " + std::to_string(config.pool_stride));
  }
  const auto rf = receptive_field(config).rf_size();
  if (rf != kRequiredReceptiveField) {
    throw ConfigError("final receptive field is " + std::to_string(rf) + " pixels, expected " +
                      std::to_string(kRequiredReceptiveField));
  }
}

GridDims output_grid(const ArchConfig& config, std::int64_t height, std::int64_t width) {
  check_shape(config);
  GridDims g{height, width};
  auto apply = [&](std::int64_t k, std::int64_t s, const std::string& layer) {
    if (g.rows < k || g.cols < k) {
      throw DimensionError("input " + std::to_string(height) + "x" + std::to_string(width) +
                           " is too small: " + layer + " (kernel " + std::to_string(k) +
                           ") sees " + std::to_string(g.rows) + "x" + std::to_string(g.cols));
    }
    g.rows = (g.rows - k) / s + 1;
    g.cols = (g.cols - k) / s + 1;
  };
  for (const auto& layer : receptive_field(config).layers) {
    apply(layer.kernel, layer.stride, layer.name);
  }
  return g;
}

}  // namespace lfd
