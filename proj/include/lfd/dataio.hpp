#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lfd/maskgen.hpp"
#include "lfd/tensor.hpp"

namespace lfd {

namespace fs = std::filesystem;

// ---- Images ---------------------------------------------------------------

// 8-bit interleaved RGB, row-major.
struct RgbImage {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> bytes;  // height·width·3

  bool operator==(const RgbImage&) const = default;
};

// Throws IoError naming the path if the file cannot be decoded or is not a
// colour image. An alpha channel is dropped.
RgbImage read_png_rgb(const fs::path& path);
void write_png_rgb(const RgbImage& image, const fs::path& path);

// 8-bit grayscale PNG; nonzero pixels are written as 255. Reading thresholds
// at 128.
Mask read_mask_png(const fs::path& path);
void write_mask_png(const Mask& mask, const fs::path& path);
void write_gray_png(std::int64_t height, std::int64_t width, const std::vector<std::uint8_t>& gray,
                    const fs::path& path);

// 3×H×W float tensor, byte/255 − 0.5.
Tensor<float> image_to_tensor(const RgbImage& image);
Tensor<float> load_image(const fs::path& path);

// JSON array of [x, y] pairs.
std::vector<Point> read_landmarks(const fs::path& path);
void write_landmarks(const std::vector<Point>& points, const fs::path& path);

// ---- Manifests ------------------------------------------------------------

inline constexpr int kManifestVersion = 1;

enum class MaskKind { kFile, kZeros, kOnes, kConvexHull };

struct MaskSource {
  MaskKind kind = MaskKind::kZeros;
  std::string path;  // kFile only, relative to the manifest directory

  bool operator==(const MaskSource&) const = default;
};

// "zm", "om", "cvm" or "file:<path>".
std::string to_string(const MaskSource& source);
MaskSource parse_mask_source(const std::string& text);

struct SampleRecord {
  std::string image_path;
  std::int32_t label = 0;            // 0 real, 1 fake
  std::vector<MaskSource> masks;     // one per objective
  std::string landmarks_path;        // required by CVM sources

  bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
  int version = kManifestVersion;
  std::int64_t crop_size = 128;
  std::vector<std::string> objectives;
  std::vector<SampleRecord> samples;
  fs::path root;  // directory that relative paths resolve against; not serialized

  std::size_t num_objectives() const { return objectives.size(); }
  // Index of `name` in objectives; ConfigError when absent.
  std::size_t objective_index(const std::string& name) const;
  bool operator==(const Manifest& other) const {
    return version == other.version && crop_size == other.crop_size &&
           objectives == other.objectives && samples == other.samples;
  }
};

// Structural checks: binary labels, one mask source per objective, CVM
// sources carry landmarks. With check_files, every referenced file must exist.
// Throws ConfigError (structure) or IoError (missing file).
void validate_manifest(const Manifest& manifest, bool check_files);

// Reads and validates (including file existence); sets root to the file's
// directory.
Manifest read_manifest(const fs::path& path);
void write_manifest(const Manifest& manifest, const fs::path& path);

// Mask for one objective of one sample at the image's full size.
Mask resolve_mask(const Manifest& manifest, const SampleRecord& record, std::size_t objective,
                  std::int64_t height, std::int64_t width);

// ---- Synthetic benchmark --------------------------------------------------

struct SynthParams {
  std::int64_t count_per_class = 100;
  std::int64_t size = 128;
  std::uint64_t seed = 0;
  double amplitude = 0.02;
  int levels = 32;
  int smoothing_passes = 3;
  double fully_generated_fraction = 0.25;  // of the fake class
};

// Throws ConfigError for size < 33, amplitude outside (0, 0.5), levels < 2.
void validate(const SynthParams& params);

enum class SampleKind { kReal, kManipulated, kFullyGenerated };

struct SynthSample {
  SampleKind kind = SampleKind::kReal;
  RgbImage clean;                 // render before the artifact
  RgbImage image;                 // emitted image
  Mask region;                    // pixels carrying the artifact
  std::vector<Point> landmarks;   // points on the face ellipse
};

// Sample `index` of a dataset; depends only on (params, index).
SynthSample render_synth_sample(const SynthParams& params, std::int64_t index);

struct SynthSummary {
  std::int64_t real = 0;
  std::int64_t manipulated = 0;
  std::int64_t fully_generated = 0;
  // Mean |image − clean| over artifact pixels, in [0, 1] intensity units.
  double mean_abs_delta = 0.0;
  double mean_region_fraction = 0.0;  // over manipulated samples
};

// Writes images/, clean/ (pre-artifact renders of fake samples), masks/,
// landmarks/ and manifest.json under out_dir. Objectives: "fake" (true
// artifact masks: ZM, polygon file, OM), "fake_cvm" (ZM for real, CVM for
// fake) and "face" (CVM for every sample).
SynthSummary synth_dataset(const SynthParams& params, const fs::path& out_dir,
                           std::size_t threads = 1);

// ---- Batching -------------------------------------------------------------

// Decoded images and resolved masks for a chosen list of objectives, kept in
// memory as bytes.
struct SampleCache {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<RgbImage> images;
  std::vector<std::int32_t> labels;
  std::vector<std::vector<Mask>> masks;  // [sample][selected objective]

  std::size_t size() const { return images.size(); }
  std::size_t num_objectives() const { return masks.empty() ? 0 : masks.front().size(); }
};

// All images must share one size (DimensionError otherwise).
SampleCache load_samples(const Manifest& manifest, const std::vector<std::size_t>& objectives,
                         std::size_t threads = 1);

enum class CropMode { kCenter, kRandom };

struct CropSpec {
  CropMode mode = CropMode::kCenter;
  std::int64_t size = 128;
};

struct Batch {
  Tensor<float> images;                  // N×3×S×S
  std::vector<std::int32_t> labels;
  std::vector<std::vector<Mask>> masks;  // [objective][sample], cropped like images
  std::vector<std::size_t> indices;      // sample indices in the cache
  std::vector<std::pair<std::int64_t, std::int64_t>> offsets;  // crop (row, col)
};

// Crops sample `i` of the cache at (row, col).
void crop_into(const SampleCache& cache, std::size_t i, std::int64_t row, std::int64_t col,
               std::int64_t size, float* dst);

// Deterministic batches: the order is a seeded shuffle when shuffle_seed is
// set, else manifest order; random crop offsets come from the same seed. The
// last batch may be partial.
class BatchIterator {
 public:
  BatchIterator(const SampleCache& cache, std::size_t batch_size, CropSpec crop,
                std::optional<std::uint64_t> shuffle_seed);

  bool next(Batch& batch);
  std::size_t num_batches() const;

 private:
  const SampleCache& cache_;
  std::size_t batch_size_;
  CropSpec crop_;
  std::vector<std::size_t> order_;
  std::vector<std::pair<std::int64_t, std::int64_t>> offsets_;
  std::size_t cursor_ = 0;
};

}  // namespace lfd
