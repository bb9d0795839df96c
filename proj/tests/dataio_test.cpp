#include "lfd/dataio.hpp"

#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "lfd/errors.hpp"

using namespace lfd;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("lfd_dataio_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RgbImage gradient_image(std::int64_t h, std::int64_t w) {
  RgbImage img{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w * 3))};
  for (std::size_t i = 0; i < img.bytes.size(); ++i) img.bytes[i] = static_cast<std::uint8_t>(i * 7);
  return img;
}

SynthParams small_params(std::uint64_t seed) {
  SynthParams p;
  p.count_per_class = 6;
  p.size = 48;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("png round trips") {
  TempDir dir("png");
  const auto img = gradient_image(5, 7);
  write_png_rgb(img, dir.path / "a.png");
  CHECK(read_png_rgb(dir.path / "a.png") == img);

  Mask m(4, 6);
  m.at(1, 2) = 1;
  m.at(3, 5) = 1;
  write_mask_png(m, dir.path / "m.png");
  CHECK(read_mask_png(dir.path / "m.png") == m);
  CHECK_THROWS_AS(read_png_rgb(dir.path / "m.png"), IoError);
  CHECK_THROWS_AS(read_png_rgb(dir.path / "missing.png"), IoError);

  std::ofstream(dir.path / "junk.png") << "not a png";
  CHECK_THROWS_AS(read_png_rgb(dir.path / "junk.png"), IoError);
}

TEST_CASE("mask threshold is 128") {
  TempDir dir("thresh");
  write_gray_png(1, 4, {0, 127, 128, 255}, dir.path / "g.png");
  const auto m = read_mask_png(dir.path / "g.png");
  CHECK(m.values == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("load_image scales to [0,1] and shifts by -0.5") {
  TempDir dir("load");
  RgbImage img{1, 2, {0, 255, 51, 102, 204, 153}};
  write_png_rgb(img, dir.path / "x.png");
  const auto t = load_image(dir.path / "x.png");
  CHECK(t.shape() == Shape{3, 1, 2});
  // Planar: R plane, G plane, B plane.
  CHECK(t[0] == doctest::Approx(-0.5));
  CHECK(t[1] == doctest::Approx(102 / 255.0 - 0.5));
  CHECK(t[2] == doctest::Approx(0.5));
  CHECK(t[3] == doctest::Approx(204 / 255.0 - 0.5));
  CHECK(t[4] == doctest::Approx(51 / 255.0 - 0.5));
  CHECK(t[5] == doctest::Approx(153 / 255.0 - 0.5));
}

TEST_CASE("landmark files round trip exactly") {
  TempDir dir("lm");
  const std::vector<Point> pts{{1.25, 2.0}, {0.1, 3.3333333333333335}, {-4.0, 1e-7}};
  write_landmarks(pts, dir.path / "l.json");
  CHECK(read_landmarks(dir.path / "l.json") == pts);
  std::ofstream(dir.path / "bad.json") << "[[1,2,3]]";
  CHECK_THROWS_AS(read_landmarks(dir.path / "bad.json"), FormatError);
}

TEST_CASE("mask source strings") {
  for (const auto& s : {"zm", "om", "cvm", "file:masks/a b.png"}) {
    CHECK(to_string(parse_mask_source(s)) == s);
  }
  CHECK_THROWS_AS(parse_mask_source("ones"), FormatError);
  CHECK_THROWS_AS(parse_mask_source("file:"), FormatError);
}

TEST_CASE("manifest round trip and validation") {
  TempDir dir("manifest");
  write_png_rgb(gradient_image(40, 40), dir.path / "a.png");
  write_png_rgb(gradient_image(40, 40), dir.path / "b.png");
  write_mask_png(ones_mask(40, 40), dir.path / "bm.png");
  write_landmarks({{5, 5}, {30, 5}, {5, 30}}, dir.path / "a.json");

  Manifest m;
  m.crop_size = 36;
  m.objectives = {"fake", "face"};
  m.samples = {
      {"a.png", 0, {parse_mask_source("zm"), parse_mask_source("cvm")}, "a.json"},
      {"b.png", 1, {parse_mask_source("file:bm.png"), parse_mask_source("om")}, ""},
  };
  write_manifest(m, dir.path / "manifest.json");
  const auto back = read_manifest(dir.path / "manifest.json");
  CHECK(back == m);
  CHECK(back.root == dir.path);
  CHECK(back.objective_index("face") == 1);
  CHECK_THROWS_AS(back.objective_index("nope"), ConfigError);

  SUBCASE("cvm needs landmarks") {
    auto bad = m;
    bad.samples[0].landmarks_path.clear();
    CHECK_THROWS_AS(write_manifest(bad, dir.path / "x.json"), ConfigError);
  }
  SUBCASE("labels are binary") {
    auto bad = m;
    bad.samples[1].label = 2;
    CHECK_THROWS_AS(write_manifest(bad, dir.path / "x.json"), ConfigError);
  }
  SUBCASE("objective count is consistent") {
    auto bad = m;
    bad.samples[1].masks.pop_back();
    CHECK_THROWS_AS(write_manifest(bad, dir.path / "x.json"), ConfigError);
  }
  SUBCASE("referenced files must exist") {
    fs::remove(dir.path / "bm.png");
    CHECK_THROWS_AS(read_manifest(dir.path / "manifest.json"), IoError);
  }
}

TEST_CASE("resolve_mask dispatches on the source kind") {
  TempDir dir("resolve");
  const std::vector<Point> tri{{2, 3}, {30, 6}, {10, 28}};
  write_landmarks(tri, dir.path / "l.json");
  Mask file_mask(32, 32);
  file_mask.at(4, 4) = 1;
  write_mask_png(file_mask, dir.path / "m.png");
  Manifest m;
  m.root = dir.path;
  m.objectives = {"a", "b", "c", "d"};
  const SampleRecord rec{"img.png", 1,
                         {parse_mask_source("zm"), parse_mask_source("om"),
                          parse_mask_source("cvm"), parse_mask_source("file:m.png")},
                         "l.json"};
  CHECK(resolve_mask(m, rec, 0, 32, 32) == zeros_mask(32, 32));
  CHECK(resolve_mask(m, rec, 1, 32, 32) == ones_mask(32, 32));
  CHECK(resolve_mask(m, rec, 2, 32, 32) == convex_hull_mask(tri, 32, 32));
  CHECK(resolve_mask(m, rec, 3, 32, 32) == file_mask);
  CHECK_THROWS_AS(resolve_mask(m, rec, 3, 32, 33), DimensionError);
}

TEST_CASE("synthetic samples") {
  const auto p = small_params(7);
  SUBCASE("kinds and labels") {
    CHECK(render_synth_sample(p, 0).kind == SampleKind::kReal);
    CHECK(render_synth_sample(p, 6).kind == SampleKind::kFullyGenerated);  // round(0.25·6) = 2
    CHECK(render_synth_sample(p, 7).kind == SampleKind::kFullyGenerated);
    CHECK(render_synth_sample(p, 8).kind == SampleKind::kManipulated);
  }
  SUBCASE("artifact confined to the region and present on every region pixel") {
    for (std::int64_t i = 0; i < 12; ++i) {
      const auto s = render_synth_sample(p, i);
      std::int64_t changed_outside = 0, unchanged_inside = 0;
      for (std::size_t b = 0; b < s.image.bytes.size(); ++b) {
        const bool in = s.region.values[b / 3] != 0;
        const bool changed = s.image.bytes[b] != s.clean.bytes[b];
        changed_outside += !in && changed;
        unchanged_inside += in && !changed;
      }
      CHECK(changed_outside == 0);
      CHECK(unchanged_inside == 0);
      if (s.kind == SampleKind::kManipulated) {
        CHECK(s.region.count() > 0);
        CHECK(s.region.count() < p.size * p.size / 2);
      }
      CHECK(s.landmarks.size() == 16);
    }
  }
  SUBCASE("rendering is a function of (params, index)") {
    const auto a = render_synth_sample(p, 9);
    const auto b = render_synth_sample(p, 9);
    CHECK(a.image == b.image);
    CHECK(a.region == b.region);
    CHECK(render_synth_sample(small_params(8), 9).image != a.image);
  }
  SUBCASE("parameter validation") {
    auto bad = p;
    bad.size = 32;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = p;
    bad.amplitude = 0.5;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad.amplitude = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
  }
}

TEST_CASE("synth_dataset writes a deterministic, self-consistent tree") {
  TempDir a("synth_a"), b("synth_b");
  const auto p = small_params(3);
  const auto sa = synth_dataset(p, a.path, 1);
  const auto sb = synth_dataset(p, b.path, 4);
  CHECK(sb.mean_abs_delta == sa.mean_abs_delta);
  CHECK(sa.real == 6);
  CHECK(sa.fully_generated == 2);
  CHECK(sa.manipulated == 4);

  std::set<std::string> files_a, files_b;
  for (const auto& e : fs::recursive_directory_iterator(a.path)) {
    if (e.is_regular_file()) files_a.insert(fs::relative(e.path(), a.path).string());
  }
  for (const auto& e : fs::recursive_directory_iterator(b.path)) {
    if (e.is_regular_file()) files_b.insert(fs::relative(e.path(), b.path).string());
  }
  REQUIRE(files_a == files_b);
  for (const auto& f : files_a) CHECK_MESSAGE(slurp(a.path / f) == slurp(b.path / f), f);

  // Recompute the reported artifact strength from the emitted files.
  const auto m = read_manifest(a.path / "manifest.json");
  REQUIRE(m.samples.size() == 12);
  const auto fake = m.objective_index("fake");
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& rec : m.samples) {
    if (rec.label == 0) {
      CHECK(rec.masks[fake].kind == MaskKind::kZeros);
      CHECK(rec.masks[m.objective_index("fake_cvm")].kind == MaskKind::kZeros);
      continue;
    }
    CHECK(rec.masks[m.objective_index("fake_cvm")].kind == MaskKind::kConvexHull);
    const auto img = read_png_rgb(a.path / rec.image_path);
    const auto clean = read_png_rgb(a.path / "clean" / fs::path(rec.image_path).filename());
    const auto region = resolve_mask(m, rec, fake, img.height, img.width);
    for (std::size_t i = 0; i < img.bytes.size(); ++i) {
      const int d = std::abs(int(img.bytes[i]) - int(clean.bytes[i]));
      if (region.values[i / 3]) {
        sum += d / 255.0;
        ++count;
      } else {
        CHECK(d == 0);
      }
    }
  }
  CHECK(sa.mean_abs_delta == doctest::Approx(sum / count).epsilon(1e-12));
  // Amplitude-scale: the ±0.02 pattern plus at most half a quantization step.
  CHECK(sa.mean_abs_delta > 0.5 * p.amplitude);
  CHECK(sa.mean_abs_delta < p.amplitude + 0.5 / (p.levels - 1) + 1.0 / 255);
}

TEST_CASE("batch iteration") {
  SampleCache cache;
  cache.height = 20;
  cache.width = 24;
  for (int i = 0; i < 7; ++i) {
    RgbImage img{20, 24, std::vector<std::uint8_t>(20 * 24 * 3, 0)};
    Mask m(20, 24);
    // Marker: one pixel whose red byte encodes the sample and whose mask bit is set.
    const std::int64_t r = 5 + i, c = 3 + 2 * i;
    img.bytes[(r * 24 + c) * 3] = static_cast<std::uint8_t>(100 + i);
    m.at(r, c) = 1;
    cache.images.push_back(img);
    cache.labels.push_back(i % 2);
    cache.masks.push_back({m});
  }

  SUBCASE("sequential order with a partial final batch") {
    BatchIterator it(cache, 3, {CropMode::kCenter, 20}, std::nullopt);
    CHECK(it.num_batches() == 3);
    Batch b;
    std::vector<std::size_t> seen;
    std::vector<std::int64_t> sizes;
    while (it.next(b)) {
      sizes.push_back(b.images.dim(0));
      seen.insert(seen.end(), b.indices.begin(), b.indices.end());
      CHECK(b.masks.size() == 1);
      CHECK(b.masks[0].size() == b.indices.size());
    }
    CHECK(sizes == std::vector<std::int64_t>{3, 3, 1});
    CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
  }
  SUBCASE("seeded shuffle is deterministic and a permutation") {
    auto collect = [&](std::uint64_t seed) {
      BatchIterator it(cache, 2, {CropMode::kRandom, 16}, seed);
      Batch b;
      std::vector<std::size_t> order;
      std::vector<std::pair<std::int64_t, std::int64_t>> offs;
      while (it.next(b)) {
        order.insert(order.end(), b.indices.begin(), b.indices.end());
        offs.insert(offs.end(), b.offsets.begin(), b.offsets.end());
      }
      return std::make_pair(order, offs);
    };
    const auto a = collect(5), b = collect(5);
    CHECK(a == b);
    auto sorted = a.first;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    CHECK(collect(6) != a);
  }
  SUBCASE("masks are cropped at the image crop offset") {
    for (auto mode : {CropMode::kCenter, CropMode::kRandom}) {
      BatchIterator it(cache, 4, {mode, 14}, 11);
      Batch b;
      while (it.next(b)) {
        for (std::size_t k = 0; k < b.indices.size(); ++k) {
          const auto i = static_cast<int>(b.indices[k]);
          const auto plane = 14 * 14;
          const float* red = b.images.data() + k * 3 * plane;
          for (std::int64_t p = 0; p < plane; ++p) {
            const bool marker = red[p] == static_cast<float>(100 + i) / 255.0f - 0.5f;
            CHECK(marker == (b.masks[0][k].values[p] == 1));
          }
          const auto [r0, c0] = b.offsets[k];
          CHECK(r0 >= 0);
          CHECK(r0 + 14 <= 20);
          CHECK(c0 + 14 <= 24);
          if (mode == CropMode::kCenter) CHECK(b.offsets[k] == std::pair<std::int64_t, std::int64_t>{3, 5});
        }
      }
    }
  }
  SUBCASE("crop larger than the image") {
    CHECK_THROWS_AS(BatchIterator(cache, 2, {CropMode::kCenter, 21}, std::nullopt), DimensionError);
  }
}

TEST_CASE("parallel loading matches serial loading") {
  TempDir dir("load_par");
  synth_dataset(small_params(4), dir.path, 2);
  const auto m = read_manifest(dir.path / "manifest.json");
  const std::vector<std::size_t> objectives{0, 2};
  const auto serial = load_samples(m, objectives, 1);
  const auto par = load_samples(m, objectives, 4);
  CHECK(serial.images == par.images);
  CHECK(serial.masks == par.masks);
  CHECK(serial.labels == par.labels);
  CHECK(serial.num_objectives() == 2);
  CHECK(serial.height == 48);
}
