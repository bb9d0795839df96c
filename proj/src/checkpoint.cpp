#include "lfd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lfd/errors.hpp"

namespace lfd {
namespace {

static_assert(std::endian::native == std::endian::little,
              "weights.bin is little-endian; add byte swapping for this target");

using nlohmann::json;

constexpr const char* kFormatName = "lfd-checkpoint";

json arch_to_json(const ArchConfig& c) {
  return {{"input_size", c.input_size},       {"in_channels", c.in_channels},
          {"conv_kernels", c.conv_kernels},   {"conv_channels", c.conv_channels},
          {"pool_position", c.pool_position}, {"pool_kernel", c.pool_kernel},
          {"pool_stride", c.pool_stride},     {"num_seg_heads", c.num_seg_heads},
          {"num_classes", c.num_classes},     {"override_constraints", c.override_constraints}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig c;
  c.input_size = j.at("input_size").get<std::int64_t>();
  c.in_channels = j.at("in_channels").get<std::int64_t>();
  c.conv_kernels = j.at("conv_kernels").get<std::vector<std::int64_t>>();
  c.conv_channels = j.at("conv_channels").get<std::vector<std::int64_t>>();
  c.pool_position = j.at("pool_position").get<std::int64_t>();
  c.pool_kernel = j.at("pool_kernel").get<std::int64_t>();
  c.pool_stride = j.at("pool_stride").get<std::int64_t>();
  c.num_seg_heads = j.at("num_seg_heads").get<std::int64_t>();
  c.num_classes = j.at("num_classes").get<std::int64_t>();
  c.override_constraints = j.at("override_constraints").get<bool>();
  return c;
}

// Visits every stored tensor, parameters first, then running statistics.
// Works for const (save) and mutable (load) models.
template <typename M, typename Fn>
void for_each_stored(M& model, Fn&& fn) {
  for (auto& p : model.parameters()) fn(p.name, p.tensor.shape(), p.tensor.data());
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    auto& bn = model.blocks[i].bn;
    const auto prefix = "conv" + std::to_string(i + 1) + ".bn.";
    const Shape shape{static_cast<std::int64_t>(bn.running_mean.size())};
    fn(prefix + "running_mean", shape, bn.running_mean.data());
    fn(prefix + "running_var", shape, bn.running_var.data());
  }
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  json index = json::array();
  std::ofstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + (dir / "weights.bin").string());
  std::uint64_t offset = 0;
  for_each_stored(model, [&](const std::string& name, const Shape& shape, const float* data) {
    const auto n = shape_numel(shape);
    index.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    offset += static_cast<std::uint64_t>(n) * sizeof(float);
  });
  if (!bin) throw IoError("failed writing " + (dir / "weights.bin").string());

  json manifest = {{"format", kFormatName},
                   {"version", kCheckpointVersion},
                   {"dtype", "float32-le"},
                   {"arch", arch_to_json(model.config)},
                   {"tensors", index}};
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << '\n';
  if (!mf) throw IoError("failed writing " + (dir / "manifest.json").string());
}

Model<float> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot read " + (dir / "manifest.json").string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint manifest " + (dir / "manifest.json").string() + ": " +
                      e.what());
  }
  if (manifest.value("format", std::string{}) != kFormatName) {
    throw FormatError("not an lfd checkpoint: " + dir.string());
  }
  if (manifest.value("version", -1) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + manifest.value("version", json()).dump());
  }

  Model<float> model;
  try {
    model = build_model<float>(arch_from_json(manifest.at("arch")), 0);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad architecture in checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad architecture in checkpoint: ") + e.what());
  }

  std::ifstream bin(dir / "weights.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot read " + (dir / "weights.bin").string());
  const auto file_size = static_cast<std::uint64_t>(bin.tellg());

  const auto& index = manifest.at("tensors");
  std::size_t expected_count = 0;
  for_each_stored(model, [&](const std::string&, const Shape&, float*) { ++expected_count; });
  if (!index.is_array() || index.size() != expected_count) {
    throw FormatError("checkpoint lists " + std::to_string(index.size()) +
                      " tensors, architecture needs " + std::to_string(expected_count));
  }
  std::size_t i = 0;
  try {
  for_each_stored(model, [&](const std::string& want_name, const Shape& want_shape, float* data) {
    const auto& entry = index[i++];
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (name != want_name || shape != want_shape) {
      throw FormatError("tensor " + std::to_string(i - 1) + " is " + name + shape_str(shape) +
                        ", architecture expects " + want_name + shape_str(want_shape));
    }
    const auto bytes = static_cast<std::uint64_t>(shape_numel(shape)) * sizeof(float);
    if (offset + bytes > file_size) throw FormatError("weights.bin truncated at tensor " + name);
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (!bin) throw IoError("failed reading tensor " + name);
  });
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed tensor index: ") + e.what());
  }
  return model;
}

}  // namespace lfd
