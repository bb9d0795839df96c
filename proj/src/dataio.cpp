#include "lfd/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "json.hpp"
#include "lfd/errors.hpp"
#include "lfd/parallel.hpp"

namespace lfd {
namespace {

using nlohmann::json;

constexpr const char* kManifestFormat = "lfd-manifest";

struct PngImage {
  png_image png{};
  PngImage() { png.version = PNG_IMAGE_VERSION; }
  ~PngImage() { png_image_free(&png); }
};

std::vector<std::uint8_t> read_png(const fs::path& path, std::uint32_t format, bool need_color,
                                   std::int64_t& height, std::int64_t& width) {
  PngImage img;
  if (!png_image_begin_read_from_file(&img.png, path.c_str())) {
    throw IoError("cannot decode PNG " + path.string() + ": " + img.png.message);
  }
  if (need_color && (img.png.format & PNG_FORMAT_FLAG_COLOR) == 0) {
    throw IoError("expected an RGB image, got grayscale: " + path.string());
  }
  img.png.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img.png));
  if (!png_image_finish_read(&img.png, nullptr, buf.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG " + path.string() + ": " + img.png.message);
  }
  height = img.png.height;
  width = img.png.width;
  return buf;
}

void write_png(const fs::path& path, std::uint32_t format, std::int64_t height,
               std::int64_t width, const std::uint8_t* data) {
  PngImage img;
  img.png.format = format;
  img.png.height = static_cast<png_uint_32>(height);
  img.png.width = static_cast<png_uint_32>(width);
  if (!png_image_write_to_file(&img.png, path.c_str(), 0, data, 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.png.message);
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

// ---- Images ---------------------------------------------------------------

RgbImage read_png_rgb(const fs::path& path) {
  RgbImage out;
  out.bytes = read_png(path, PNG_FORMAT_RGB, true, out.height, out.width);
  return out;
}

void write_png_rgb(const RgbImage& image, const fs::path& path) {
  write_png(path, PNG_FORMAT_RGB, image.height, image.width, image.bytes.data());
}

Mask read_mask_png(const fs::path& path) {
  std::int64_t h = 0, w = 0;
  const auto gray = read_png(path, PNG_FORMAT_GRAY, false, h, w);
  Mask mask(h, w);
  for (std::size_t i = 0; i < gray.size(); ++i) mask.values[i] = gray[i] >= 128 ? 1 : 0;
  return mask;
}

void write_mask_png(const Mask& mask, const fs::path& path) {
  std::vector<std::uint8_t> gray(mask.values.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.values[i] ? 255 : 0;
  write_gray_png(mask.height, mask.width, gray, path);
}

void write_gray_png(std::int64_t height, std::int64_t width, const std::vector<std::uint8_t>& gray,
                    const fs::path& path) {
  write_png(path, PNG_FORMAT_GRAY, height, width, gray.data());
}

Tensor<float> image_to_tensor(const RgbImage& image) {
  const auto plane = image.height * image.width;
  Tensor<float> t(Shape{3, image.height, image.width});
  for (std::int64_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      t[c * plane + p] = static_cast<float>(image.bytes[p * 3 + c]) / 255.0f - 0.5f;
    }
  }
  return t;
}

Tensor<float> load_image(const fs::path& path) { return image_to_tensor(read_png_rgb(path)); }

std::vector<Point> read_landmarks(const fs::path& path) {
  const auto j = read_json(path);
  std::vector<Point> pts;
  try {
    for (const auto& p : j) {
      if (p.size() != 2) throw FormatError("landmark entries must be [x, y] pairs");
      pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError("bad landmarks file " + path.string() + ": " + e.what());
  }
  return pts;
}

void write_landmarks(const std::vector<Point>& points, const fs::path& path) {
  json j = json::array();
  for (const auto& p : points) j.push_back({p.x, p.y});
  write_text(path, j.dump() + "\n");
}

// ---- Manifests ------------------------------------------------------------

std::string to_string(const MaskSource& source) {
  switch (source.kind) {
    case MaskKind::kZeros: return "zm";
    case MaskKind::kOnes: return "om";
    case MaskKind::kConvexHull: return "cvm";
    case MaskKind::kFile: return "file:" + source.path;
  }
  return "";
}

MaskSource parse_mask_source(const std::string& text) {
  if (text == "zm") return {MaskKind::kZeros, ""};
  if (text == "om") return {MaskKind::kOnes, ""};
  if (text == "cvm") return {MaskKind::kConvexHull, ""};
  if (text.starts_with("file:") && text.size() > 5) return {MaskKind::kFile, text.substr(5)};
  throw FormatError("unknown mask source '" + text + "' (expected zm, om, cvm or file:<path>)");
}

std::size_t Manifest::objective_index(const std::string& name) const {
  const auto it = std::find(objectives.begin(), objectives.end(), name);
  if (it == objectives.end()) {
    std::string known;
    for (const auto& o : objectives) known += (known.empty() ? "" : ", ") + o;
    throw ConfigError("objective '" + name + "' not in manifest (has: " + known + ")");
  }
  return static_cast<std::size_t>(it - objectives.begin());
}

void validate_manifest(const Manifest& m, bool check_files) {
  if (m.version != kManifestVersion) {
    throw ConfigError("unsupported manifest version " + std::to_string(m.version));
  }
  if (m.crop_size <= 0) throw ConfigError("manifest crop_size must be positive");
  auto require_file = [&](const std::string& rel) {
    if (check_files && !fs::exists(m.root / rel)) {
      throw IoError("manifest references missing file " + (m.root / rel).string());
    }
  };
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const auto& s = m.samples[i];
    const auto where = "sample " + std::to_string(i) + " (" + s.image_path + ")";
    if (s.label != 0 && s.label != 1) {
      throw ConfigError(where + ": label must be 0 or 1, got " + std::to_string(s.label));
    }
    if (s.masks.size() != m.objectives.size()) {
      throw ConfigError(where + ": " + std::to_string(s.masks.size()) + " mask sources for " +
                        std::to_string(m.objectives.size()) + " objectives");
    }
    require_file(s.image_path);
    for (const auto& src : s.masks) {
      if (src.kind == MaskKind::kConvexHull && s.landmarks_path.empty()) {
        throw ConfigError(where + ": cvm mask source needs a landmarks file");
      }
      if (src.kind == MaskKind::kFile) require_file(src.path);
    }
    if (!s.landmarks_path.empty()) require_file(s.landmarks_path);
  }
}

Manifest read_manifest(const fs::path& path) {
  const auto j = read_json(path);
  Manifest m;
  m.root = path.parent_path();
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      throw FormatError("not an lfd manifest: " + path.string());
    }
    m.version = j.at("version").get<int>();
    m.crop_size = j.at("crop_size").get<std::int64_t>();
    m.objectives = j.at("objectives").get<std::vector<std::string>>();
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.image_path = s.at("image").get<std::string>();
      r.label = s.at("label").get<std::int32_t>();
      for (const auto& src : s.at("masks")) r.masks.push_back(parse_mask_source(src.get<std::string>()));
      r.landmarks_path = s.value("landmarks", std::string{});
      m.samples.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  validate_manifest(m, true);
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  validate_manifest(m, false);
  json samples = json::array();
  for (const auto& s : m.samples) {
    json masks = json::array();
    for (const auto& src : s.masks) masks.push_back(to_string(src));
    json rec = {{"image", s.image_path}, {"label", s.label}, {"masks", masks}};
    if (!s.landmarks_path.empty()) rec["landmarks"] = s.landmarks_path;
    samples.push_back(std::move(rec));
  }
  const json j = {{"format", kManifestFormat}, {"version", m.version},
                  {"crop_size", m.crop_size},  {"objectives", m.objectives},
                  {"samples", samples}};
  write_text(path, j.dump(1) + "\n");
}

Mask resolve_mask(const Manifest& manifest, const SampleRecord& record, std::size_t objective,
                  std::int64_t height, std::int64_t width) {
  const auto& src = record.masks.at(objective);
  switch (src.kind) {
    case MaskKind::kZeros: return zeros_mask(height, width);
    case MaskKind::kOnes: return ones_mask(height, width);
    case MaskKind::kConvexHull:
      return convex_hull_mask(read_landmarks(manifest.root / record.landmarks_path), height, width);
    case MaskKind::kFile: {
      auto mask = read_mask_png(manifest.root / src.path);
      if (mask.height != height || mask.width != width) {
        throw DimensionError("mask " + src.path + " is " + std::to_string(mask.height) + "x" +
                             std::to_string(mask.width) + ", image is " + std::to_string(height) +
                             "x" + std::to_string(width));
      }
      return mask;
    }
  }
  throw ContractError("unhandled mask kind");
}

// ---- Synthetic benchmark --------------------------------------------------

void validate(const SynthParams& p) {
  if (p.count_per_class < 1) throw ConfigError("synth count per class must be >= 1");
  if (p.size < 33) throw ConfigError("synth image size must be >= 33, got " + std::to_string(p.size));
  if (!(p.amplitude > 0.0 && p.amplitude < 0.5)) {
    throw ConfigError("synth amplitude must lie in (0, 0.5), got " + std::to_string(p.amplitude));
  }
  if (p.levels < 2 || p.levels > 256) throw ConfigError("synth levels must lie in [2, 256]");
  if (p.smoothing_passes < 0) throw ConfigError("synth smoothing passes must be >= 0");
  if (!(p.fully_generated_fraction >= 0.0 && p.fully_generated_fraction <= 1.0)) {
    throw ConfigError("fully generated fraction must lie in [0, 1]");
  }
}

namespace {

using Planes = std::vector<float>;  // 3×S×S

void box_blur(Planes& img, std::int64_t s) {
  Planes out(img.size());
  for (std::int64_t c = 0; c < 3; ++c) {
    const float* src = img.data() + c * s * s;
    float* dst = out.data() + c * s * s;
    for (std::int64_t r = 0; r < s; ++r) {
      for (std::int64_t q = 0; q < s; ++q) {
        float acc = 0.0f;
        for (std::int64_t dr = -1; dr <= 1; ++dr) {
          for (std::int64_t dq = -1; dq <= 1; ++dq) {
            const auto rr = std::clamp<std::int64_t>(r + dr, 0, s - 1);
            const auto qq = std::clamp<std::int64_t>(q + dq, 0, s - 1);
            acc += src[rr * s + qq];
          }
        }
        dst[r * s + q] = acc / 9.0f;
      }
    }
  }
  img.swap(out);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

SampleKind kind_of(const SynthParams& p, std::int64_t index) {
  if (index < p.count_per_class) return SampleKind::kReal;
  const auto generated = std::llround(p.fully_generated_fraction * static_cast<double>(p.count_per_class));
  return index - p.count_per_class < generated ? SampleKind::kFullyGenerated
                                               : SampleKind::kManipulated;
}

}  // namespace

SynthSample render_synth_sample(const SynthParams& p, std::int64_t index) {
  validate(p);
  const auto s = p.size;
  const auto fs_ = static_cast<double>(s);
  std::seed_seq seq{static_cast<std::uint32_t>(p.seed), static_cast<std::uint32_t>(p.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  SynthSample out;
  out.kind = kind_of(p, index);

  // Background: smoothed noise around a per-sample base colour.
  Planes img(static_cast<std::size_t>(3 * s * s));
  for (auto& v : img) v = static_cast<float>(u01(rng));
  for (int i = 0; i < p.smoothing_passes; ++i) box_blur(img, s);
  double base[3], skin[3];
  for (int c = 0; c < 3; ++c) base[c] = uni(0.25, 0.55);
  const double contrast = uni(1.5, 3.0);
  skin[0] = uni(0.65, 0.85);
  skin[1] = skin[0] - uni(0.08, 0.2);
  skin[2] = skin[1] - uni(0.05, 0.15);

  // Face ellipse.
  const double cx = fs_ / 2 + uni(-0.08, 0.08) * fs_;
  const double cy = fs_ / 2 + uni(-0.08, 0.08) * fs_;
  const double ax = uni(0.22, 0.30) * fs_;
  const double ay = uni(0.28, 0.36) * fs_;
  for (std::int64_t r = 0; r < s; ++r) {
    for (std::int64_t q = 0; q < s; ++q) {
      const double dx = (q + 0.5 - cx) / ax, dy = (r + 0.5 - cy) / ay;
      const bool face = dx * dx + dy * dy <= 1.0;
      for (int c = 0; c < 3; ++c) {
        auto& v = img[static_cast<std::size_t>(c * s * s + r * s + q)];
        const double texture = (v - 0.5) * contrast;
        v = static_cast<float>((face ? skin[c] : base[c]) + texture * (face ? 0.5 : 1.0));
      }
    }
  }
  constexpr int kLandmarks = 16;
  for (int k = 0; k < kLandmarks; ++k) {
    const double t = 2 * std::numbers::pi * (k + uni(-0.2, 0.2)) / kLandmarks;
    out.landmarks.push_back({std::clamp(cx + ax * std::cos(t), 0.0, fs_),
                             std::clamp(cy + ay * std::sin(t), 0.0, fs_)});
  }

  // Artifact region.
  switch (out.kind) {
    case SampleKind::kReal: out.region = zeros_mask(s, s); break;
    case SampleKind::kFullyGenerated: out.region = ones_mask(s, s); break;
    case SampleKind::kManipulated: {
      const auto min_area = static_cast<std::int64_t>(0.02 * fs_ * fs_);
      for (int attempt = 0;; ++attempt) {
        std::vector<Point> pts;
        for (int k = 0; k < 7; ++k) {
          const double rad = 0.85 * std::sqrt(u01(rng));
          const double t = 2 * std::numbers::pi * u01(rng);
          pts.push_back({cx + ax * rad * std::cos(t), cy + ay * rad * std::sin(t)});
        }
        try {
          out.region = convex_hull_mask(pts, s, s);
        } catch (const DegenerateHullError&) {
          continue;
        }
        if (out.region.count() >= min_area || attempt >= 100) break;
      }
      break;
    }
  }

  out.clean = RgbImage{s, s, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * s * s))};
  for (std::int64_t px = 0; px < s * s; ++px) {
    for (int c = 0; c < 3; ++c) out.clean.bytes[px * 3 + c] = to_byte(img[c * s * s + px]);
  }
  out.image = out.clean;
  const double steps = p.levels - 1;
  for (std::int64_t r = 0; r < s; ++r) {
    for (std::int64_t q = 0; q < s; ++q) {
      if (!out.region.at(r, q)) continue;
      const int sign = ((r + q) & 1) ? 1 : -1;
      for (int c = 0; c < 3; ++c) {
        const auto px = static_cast<std::size_t>((r * s + q) * 3 + c);
        const double v = std::clamp<double>(img[c * s * s + r * s + q], 0.0, 1.0);
        const double quantized = std::round(v * steps) / steps;
        auto b = static_cast<int>(to_byte(quantized + sign * p.amplitude));
        const int clean = out.clean.bytes[px];
        // Every artifact pixel differs from its clean render.
        if (b == clean) b = (clean + sign >= 0 && clean + sign <= 255) ? clean + sign : clean - sign;
        out.image.bytes[px] = static_cast<std::uint8_t>(b);
      }
    }
  }
  return out;
}

SynthSummary synth_dataset(const SynthParams& p, const fs::path& out_dir, std::size_t threads) {
  validate(p);
  for (const char* sub : {"images", "clean", "masks", "landmarks"}) {
    std::error_code ec;
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  const auto total = static_cast<std::size_t>(2 * p.count_per_class);

  Manifest manifest;
  manifest.crop_size = p.size;
  manifest.objectives = {"fake", "fake_cvm", "face"};
  manifest.samples.resize(total);
  struct Stats {
    SampleKind kind;
    double delta_sum;
    std::int64_t delta_count;
    double region_fraction;
  };
  std::vector<Stats> stats(total);

  parallel_for(total, threads, [&](std::size_t i) {
    const auto sample = render_synth_sample(p, static_cast<std::int64_t>(i));
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    SampleRecord rec;
    rec.image_path = std::string("images/") + stem + ".png";
    rec.landmarks_path = std::string("landmarks/") + stem + ".json";
    rec.label = sample.kind == SampleKind::kReal ? 0 : 1;
    write_png_rgb(sample.image, out_dir / rec.image_path);
    write_landmarks(sample.landmarks, out_dir / rec.landmarks_path);

    MaskSource fake{MaskKind::kZeros, ""};
    if (sample.kind == SampleKind::kFullyGenerated) fake.kind = MaskKind::kOnes;
    if (sample.kind == SampleKind::kManipulated) {
      fake = {MaskKind::kFile, std::string("masks/") + stem + ".png"};
      write_mask_png(sample.region, out_dir / fake.path);
    }
    if (sample.kind != SampleKind::kReal) {
      write_png_rgb(sample.clean, out_dir / "clean" / (std::string(stem) + ".png"));
    }
    const MaskSource cvm{MaskKind::kConvexHull, ""};
    rec.masks = {fake, rec.label == 0 ? MaskSource{MaskKind::kZeros, ""} : cvm, cvm};
    manifest.samples[i] = std::move(rec);

    Stats st{sample.kind, 0.0, 0, 0.0};
    for (std::size_t b = 0; b < sample.image.bytes.size(); ++b) {
      if (!sample.region.values[b / 3]) continue;
      st.delta_sum += std::abs(int(sample.image.bytes[b]) - int(sample.clean.bytes[b])) / 255.0;
      ++st.delta_count;
    }
    st.region_fraction = static_cast<double>(sample.region.count()) / static_cast<double>(p.size * p.size);
    stats[i] = st;
  });
  write_manifest(manifest, out_dir / "manifest.json");

  SynthSummary summary;
  double delta_sum = 0.0, fraction_sum = 0.0;
  std::int64_t delta_count = 0;
  for (const auto& st : stats) {
    switch (st.kind) {
      case SampleKind::kReal: ++summary.real; break;
      case SampleKind::kManipulated:
        ++summary.manipulated;
        fraction_sum += st.region_fraction;
        break;
      case SampleKind::kFullyGenerated: ++summary.fully_generated; break;
    }
    delta_sum += st.delta_sum;
    delta_count += st.delta_count;
  }
  summary.mean_abs_delta = delta_count ? delta_sum / static_cast<double>(delta_count) : 0.0;
  summary.mean_region_fraction =
      summary.manipulated ? fraction_sum / static_cast<double>(summary.manipulated) : 0.0;
  return summary;
}

// ---- Batching -------------------------------------------------------------

SampleCache load_samples(const Manifest& manifest, const std::vector<std::size_t>& objectives,
                         std::size_t threads) {
  for (auto o : objectives) {
    if (o >= manifest.num_objectives()) {
      throw ConfigError("objective index " + std::to_string(o) + " out of range");
    }
  }
  SampleCache cache;
  const auto n = manifest.samples.size();
  cache.images.resize(n);
  cache.masks.resize(n);
  cache.labels.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& rec = manifest.samples[i];
    cache.images[i] = read_png_rgb(manifest.root / rec.image_path);
    cache.labels[i] = rec.label;
    for (auto o : objectives) {
      cache.masks[i].push_back(
          resolve_mask(manifest, rec, o, cache.images[i].height, cache.images[i].width));
    }
  });
  if (n > 0) {
    cache.height = cache.images[0].height;
    cache.width = cache.images[0].width;
    for (std::size_t i = 0; i < n; ++i) {
      if (cache.images[i].height != cache.height || cache.images[i].width != cache.width) {
        throw DimensionError("image " + manifest.samples[i].image_path + " is " +
                             std::to_string(cache.images[i].height) + "x" +
                             std::to_string(cache.images[i].width) + ", expected " +
                             std::to_string(cache.height) + "x" + std::to_string(cache.width));
      }
    }
  }
  return cache;
}

void crop_into(const SampleCache& cache, std::size_t i, std::int64_t row, std::int64_t col,
               std::int64_t size, float* dst) {
  const auto& img = cache.images[i];
  const auto plane = size * size;
  for (std::int64_t r = 0; r < size; ++r) {
    const std::uint8_t* src = img.bytes.data() + ((row + r) * img.width + col) * 3;
    for (std::int64_t c = 0; c < size; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        dst[ch * plane + r * size + c] = static_cast<float>(src[c * 3 + ch]) / 255.0f - 0.5f;
      }
    }
  }
}

BatchIterator::BatchIterator(const SampleCache& cache, std::size_t batch_size, CropSpec crop,
                             std::optional<std::uint64_t> shuffle_seed)
    : cache_(cache), batch_size_(batch_size), crop_(crop), order_(cache.size()) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (cache.size() > 0 && (crop.size > cache.height || crop.size > cache.width || crop.size < 1)) {
    throw DimensionError("crop " + std::to_string(crop.size) + " does not fit images of " +
                         std::to_string(cache.height) + "x" + std::to_string(cache.width));
  }
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 rng(shuffle_seed.value_or(0));
  if (shuffle_seed) std::shuffle(order_.begin(), order_.end(), rng);
  std::uniform_int_distribution<std::int64_t> rows(0, std::max<std::int64_t>(0, cache.height - crop.size));
  std::uniform_int_distribution<std::int64_t> cols(0, std::max<std::int64_t>(0, cache.width - crop.size));
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (crop.mode == CropMode::kRandom) {
      const auto r = rows(rng);
      offsets_.emplace_back(r, cols(rng));
    } else {
      offsets_.emplace_back((cache.height - crop.size) / 2, (cache.width - crop.size) / 2);
    }
  }
}

std::size_t BatchIterator::num_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ >= order_.size()) return false;
  const auto end = std::min(order_.size(), cursor_ + batch_size_);
  const auto n = static_cast<std::int64_t>(end - cursor_);
  const auto s = crop_.size;
  batch.images = Tensor<float>(Shape{n, 3, s, s});
  batch.labels.clear();
  batch.indices.clear();
  batch.offsets.clear();
  batch.masks.assign(cache_.num_objectives(), {});
  for (std::size_t k = cursor_; k < end; ++k) {
    const auto i = order_[k];
    const auto [row, col] = offsets_[k];
    crop_into(cache_, i, row, col, s, batch.images.data() + (k - cursor_) * 3 * s * s);
    batch.labels.push_back(cache_.labels[i]);
    batch.indices.push_back(i);
    batch.offsets.emplace_back(row, col);
    for (std::size_t o = 0; o < cache_.num_objectives(); ++o) {
      const auto& full = cache_.masks[i][o];
      Mask m(s, s);
      for (std::int64_t r = 0; r < s; ++r) {
        std::copy_n(full.values.begin() + (row + r) * full.width + col, s,
                    m.values.begin() + r * s);
      }
      batch.masks[o].push_back(std::move(m));
    }
  }
  cursor_ = end;
  return true;
}

}  // namespace lfd
