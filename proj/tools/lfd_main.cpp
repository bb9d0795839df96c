#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lfd/checkpoint.hpp"
#include "lfd/dataio.hpp"
#include "lfd/errors.hpp"
#include "lfd/gradcheck_suite.hpp"
#include "lfd/kvconfig.hpp"
#include "lfd/maskgen.hpp"
#include "lfd/parallel.hpp"
#include "lfd/trainer.hpp"

namespace {

using json = nlohmann::json;
using namespace lfd;

enum ExitCode { kOk = 0, kConfigFailure = 1, kIoFailure = 2, kCheckFailure = 3 };

struct Globals {
  bool json = false;
  std::size_t threads = default_thread_count();
};

// Config file plus --set overrides for one config kind.
struct ConfigSource {
  std::string file;
  std::vector<std::string> overrides;

  KeyValues load() const {
    KeyValues kv = file.empty() ? KeyValues{} : read_key_values(file);
    apply_overrides(kv, overrides);
    return kv;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthParams params;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  const auto s = synth_dataset(a.params, a.out, g.threads);
  print_json({{"out", a.out},
              {"manifest", (fs::path(a.out) / "manifest.json").string()},
              {"real", s.real},
              {"manipulated", s.manipulated},
              {"fully_generated", s.fully_generated},
              {"mean_abs_delta", s.mean_abs_delta},
              {"mean_region_fraction", s.mean_region_fraction}});
  return kOk;
}

// ---- mask ----------------------------------------------------------------

struct MaskArgs {
  std::string landmarks;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::string kind = "cvm";
  std::string out;
};

int run_mask(const Globals& g, const MaskArgs& a) {
  Mask mask;
  if (a.kind == "zm") {
    mask = zeros_mask(a.height, a.width);
  } else if (a.kind == "om") {
    mask = ones_mask(a.height, a.width);
  } else {
    if (a.landmarks.empty()) throw ConfigError("--kind cvm needs --landmarks");
    const auto points = read_landmarks(a.landmarks);
    mask = convex_hull_mask(points, a.height, a.width);
  }
  write_mask_png(mask, a.out);
  if (g.json) {
    print_json({{"out", a.out}, {"kind", a.kind}, {"height", a.height}, {"width", a.width},
                {"pixels", mask.count()}});
  } else {
    std::cout << a.out << ": " << mask.count() << " of " << a.height * a.width << " pixels set\n";
  }
  return kOk;
}

// ---- rf ------------------------------------------------------------------

int run_rf(const Globals& g, const ConfigSource& src) {
  const auto cfg = arch_config_from(src.load());
  const auto info = receptive_field(cfg);
  const auto& last = info.final_layer();
  const bool ok = cfg.override_constraints || last.rf_size == kRequiredReceptiveField;
  if (g.json) {
    json layers = json::array();
    for (const auto& l : info.layers) {
      layers.push_back({{"name", l.name}, {"kernel", l.kernel}, {"stride", l.stride},
                        {"rf", l.rf_size}, {"jump", l.jump}, {"offset", l.center_offset}});
    }
    print_json({{"layers", layers},
                {"rf", last.rf_size},
                {"jump", last.jump},
                {"offset", last.center_offset},
                {"required", kRequiredReceptiveField},
                {"ok", ok}});
  } else {
    std::printf("%-8s %6s %6s %5s %5s %7s\n", "layer", "kernel", "stride", "rf", "jump", "offset");
    for (const auto& l : info.layers) {
      std::printf("%-8s %6lld %6lld %5lld %5lld %7g\n", l.name.c_str(),
                  static_cast<long long>(l.kernel), static_cast<long long>(l.stride),
                  static_cast<long long>(l.rf_size), static_cast<long long>(l.jump),
                  l.center_offset);
    }
    std::printf("rf=%lld jump=%lld offset=%g\n", static_cast<long long>(last.rf_size),
                static_cast<long long>(last.jump), last.center_offset);
  }
  if (!ok) {
    std::cerr << "error: final receptive field is " << last.rf_size << ", expected "
              << kRequiredReceptiveField << "\n";
    return kCheckFailure;
  }
  validate(cfg);
  return kOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  ConfigSource arch;
  ConfigSource train;
  std::string train_manifest;
  std::string val_manifest;
  std::string out_dir;
};

json result_json(const TrainResult& r) {
  const auto& last = r.history.back();
  return {{"epochs_run", r.history.size()},
          {"best_epoch", r.best_epoch},
          {"best_val_accuracy", r.best_val_accuracy},
          {"final_loss", last.loss},
          {"seconds", r.seconds}};
}

int run_train(const Globals& g, const TrainArgs& a) {
  const auto arch = arch_config_from(a.arch.load());
  auto config = train_config_from(a.train.load());
  config.threads = g.threads;
  validate(arch);
  const auto train_set = read_manifest(a.train_manifest);
  const auto val_set = read_manifest(a.val_manifest);
  fs::create_directories(a.out_dir);
  write_text(fs::path(a.out_dir) / "arch.cfg", format_key_values(to_key_values(arch)));
  write_text(fs::path(a.out_dir) / "train.cfg", format_key_values(to_key_values(config)));
  const auto result = train(train_set, val_set, arch, config, fs::path(a.out_dir),
                            [&](const EpochRecord& r) {
                              if (g.json) {
                                std::cout << to_json_line(r) << "\n" << std::flush;
                              } else {
                                std::cerr << "epoch " << r.epoch << " loss " << r.loss
                                          << " val_acc " << r.val_accuracy << "\n";
                              }
                            });
  auto summary = result_json(result);
  summary["checkpoint"] = (fs::path(a.out_dir) / "best").string();
  print_json(summary);
  return kOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string mode = "classifier";
  std::string out_dir;
  std::vector<std::string> objectives;
  std::size_t head = 0;
  std::int64_t crop_size = 0;
  double threshold = 0.5;
};

// Manifest objectives scored against heads 0, 1, ...: the named ones, else
// the first min(heads, objectives) in manifest order.
std::vector<std::size_t> eval_objectives(const Manifest& m, std::int64_t heads,
                                         const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  if (!names.empty()) {
    if (static_cast<std::int64_t>(names.size()) > heads) {
      throw ConfigError("more objectives named than the model has heads");
    }
    for (const auto& n : names) idx.push_back(m.objective_index(n));
    return idx;
  }
  idx.resize(std::min<std::size_t>(static_cast<std::size_t>(heads), m.num_objectives()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

int run_eval(const Globals& g, const EvalArgs& a) {
  const auto model = load_checkpoint(a.checkpoint);
  const auto manifest = read_manifest(a.manifest);
  const auto cache = load_samples(
      manifest, eval_objectives(manifest, model.config.num_seg_heads, a.objectives), g.threads);
  EvalOptions opt;
  opt.mode = parse_predict_mode(a.mode);
  opt.head = a.head;
  opt.crop_size = a.crop_size;
  opt.threshold = a.threshold;
  opt.threads = g.threads;
  const auto eval = evaluate(model, cache, opt);
  if (!a.out_dir.empty()) write_metrics(eval.metrics, a.out_dir);
  if (g.json) {
    std::cout << metrics_json(eval.metrics) << "\n";
  } else {
    const auto& m = eval.metrics;
    std::cout << "samples " << m.count << "  accuracy " << m.accuracy << "  auc " << m.auc
              << "  tp " << m.tp << " fp " << m.fp << " tn " << m.tn << " fn " << m.fn << "\n";
    for (std::size_t h = 0; h < m.seg.size(); ++h) {
      std::cout << "head " << h << "  pixel_accuracy " << m.seg[h].pixel_accuracy << "  iou "
                << m.seg[h].iou << "\n";
    }
  }
  return kOk;
}

// ---- infer ---------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string image;
  std::string dir;
  std::string mode = "classifier";
  std::size_t head = 0;
  std::int64_t crop_size = 0;
  std::string heatmap_dir;
};

// 3×H×W image -> 1×3×S×S centre crop (S = 0 keeps H×W).
Tensor<float> center_crop_batch(const Tensor<float>& image, std::int64_t size) {
  const auto h = image.dim(1), w = image.dim(2);
  if (size > h || size > w) {
    throw DimensionError("crop size " + std::to_string(size) + " exceeds image " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  const auto oh = size > 0 ? size : h, ow = size > 0 ? size : w;
  const auto r0 = (h - oh) / 2, c0 = (w - ow) / 2;
  Tensor<float> out(Shape{1, 3, oh, ow});
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t r = 0; r < oh; ++r)
      for (std::int64_t k = 0; k < ow; ++k)
        out[(c * oh + r) * ow + k] = image[(c * h + r0 + r) * w + c0 + k];
  return out;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int run_infer(const Globals& g, const InferArgs& a) {
  if (a.image.empty() == a.dir.empty()) throw ConfigError("give exactly one of --image or --dir");
  const auto model = load_checkpoint(a.checkpoint);
  const auto mode = parse_predict_mode(a.mode);
  const auto files = a.image.empty() ? list_pngs(a.dir) : std::vector<fs::path>{a.image};
  if (!a.heatmap_dir.empty()) fs::create_directories(a.heatmap_dir);
  if (!a.heatmap_dir.empty() && a.head >= model.seg_heads.size()) {
    throw ConfigError("heatmaps need segmentation head " + std::to_string(a.head));
  }

  std::vector<json> rows(files.size());
  parallel_for(files.size(), g.threads, [&](std::size_t i) {
    const auto x = center_crop_batch(load_image(files[i]), a.crop_size);
    const auto out = forward_eval(model, x);
    const double p = fake_probabilities(out, mode, a.head)[0];
    rows[i] = {{"path", files[i].string()}, {"p_fake", p},
               {"grid", {out.grid.rows, out.grid.cols}}};
    if (!a.heatmap_dir.empty()) {
      const auto& logits = out.seg_logits[a.head];
      const auto cells = out.grid.rows * out.grid.cols;
      std::vector<std::uint8_t> gray(static_cast<std::size_t>(cells));
      for (std::int64_t j = 0; j < cells; ++j) {
        const double prob = 1.0 / (1.0 + std::exp(double(logits[j]) - double(logits[cells + j])));
        gray[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(std::lround(255.0 * prob));
      }
      const auto path = fs::path(a.heatmap_dir) / files[i].filename();
      write_gray_png(out.grid.rows, out.grid.cols, gray, path);
      rows[i]["heatmap"] = path.string();
    }
  });
  if (g.json) {
    print_json(rows);
  } else {
    for (const auto& r : rows) {
      std::cout << r["path"].get<std::string>() << "\t" << r["p_fake"].get<double>() << "\tgrid "
                << r["grid"][0] << "x" << r["grid"][1] << "\n";
    }
  }
  return kOk;
}

// ---- gradcheck -----------------------------------------------------------

int run_gradcheck(const Globals& g, std::uint64_t seed, double tolerance) {
  const auto report = run_gradcheck_suite(seed, tolerance);
  if (g.json) {
    json cases = json::array();
    for (const auto& c : report.cases) {
      cases.push_back({{"name", c.name}, {"max_rel_error", c.result.max_rel_error},
                       {"checked", c.result.checked}, {"excluded", c.result.excluded},
                       {"passed", c.passed}});
    }
    print_json({{"seed", seed}, {"tolerance", tolerance}, {"passed", report.passed},
                {"seconds", report.seconds}, {"cases", cases}});
  } else {
    for (const auto& c : report.cases) {
      std::printf("%-4s %-28s max_rel_error=%.3e checked=%lld excluded=%lld\n",
                  c.passed ? "ok" : "FAIL", c.name.c_str(), c.result.max_rel_error,
                  static_cast<long long>(c.result.checked),
                  static_cast<long long>(c.result.excluded));
    }
    std::printf("%s: %zu cases in %.1f s, tolerance %g\n", report.passed ? "passed" : "FAILED",
                report.cases.size(), report.seconds, tolerance);
  }
  return report.passed ? kOk : kCheckFailure;
}

// ---- ablate --------------------------------------------------------------

struct AblateArgs {
  TrainArgs train;
  std::string test_manifest;
  std::string objective;
  std::vector<double> lambdas{0.0, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::size_t seeds = 1;
};

int run_ablate(const Globals& g, const AblateArgs& a) {
  auto arch = arch_config_from(a.train.arch.load());
  arch.num_seg_heads = 1;
  validate(arch);
  const auto base = train_config_from(a.train.train.load());
  const auto train_set = read_manifest(a.train.train_manifest);
  const auto val_set = read_manifest(a.train.val_manifest);
  const auto test_set = read_manifest(a.test_manifest);
  const auto obj_name = a.objective.empty() ? train_set.objectives.at(0) : a.objective;
  const auto train_cache = load_samples(train_set, {train_set.objective_index(obj_name)}, g.threads);
  const auto val_cache = load_samples(val_set, {}, g.threads);
  const auto test_cache = load_samples(test_set, {test_set.objective_index(obj_name)}, g.threads);
  if (a.seeds == 0) throw ConfigError("--seeds must be positive");
  std::vector<std::uint64_t> seeds(a.seeds);
  std::iota(seeds.begin(), seeds.end(), base.seed);
  const auto rows =
      run_ablation(train_cache, val_cache, test_cache, arch, base, a.lambdas, seeds, g.threads);
  const auto csv = ablation_csv(rows);
  if (!a.train.out_dir.empty()) {
    fs::create_directories(a.train.out_dir);
    write_text(fs::path(a.train.out_dir) / "ablation.csv", csv);
  }
  if (g.json) {
    json out = json::array();
    for (const auto& r : rows) {
      out.push_back({{"lambda", r.lambda_seg}, {"seed", r.seed}, {"accuracy", r.accuracy},
                     {"auc", std::isfinite(r.auc) ? json(r.auc) : json(nullptr)},
                     {"iou", r.iou}, {"best_epoch", r.best_epoch}, {"epochs", r.epochs_run}});
    }
    print_json(out);
  } else {
    std::cout << csv;
    for (double lambda : a.lambdas) {
      double sum = 0;
      for (const auto& r : rows) sum += r.lambda_seg == lambda ? r.accuracy : 0.0;
      std::printf("lambda %.2f mean accuracy %.4f\n", lambda, sum / static_cast<double>(a.seeds));
    }
  }
  return kOk;
}

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--arch-config", a.arch.file, "Architecture key-value file");
  cmd->add_option("--arch-set", a.arch.overrides, "Architecture override key=value")
      ->allow_extra_args(false);
  cmd->add_option("--train-config", a.train.file, "Training key-value file");
  cmd->add_option("--set", a.train.overrides, "Training override key=value")
      ->allow_extra_args(false);
  cmd->add_option("--train-manifest", a.train_manifest, "Training manifest.json")->required();
  cmd->add_option("--val-manifest", a.val_manifest, "Validation manifest.json")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locality-constrained face forgery detector"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--json", g.json, "Machine-readable JSON on stdout");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset and manifest");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--count", synth.params.count_per_class, "Samples per class");
  synth_cmd->add_option("--size", synth.params.size, "Image side in pixels");
  synth_cmd->add_option("--seed", synth.params.seed, "Random seed");
  synth_cmd->add_option("--amplitude", synth.params.amplitude, "Artifact amplitude");
  synth_cmd->add_option("--levels", synth.params.levels, "Quantization levels");
  synth_cmd->add_option("--fully-generated-fraction", synth.params.fully_generated_fraction,
                        "Share of fake samples altered everywhere");

  MaskArgs mask;
  auto* mask_cmd = app.add_subcommand("mask", "Write a ZM, OM or convex hull mask");
  mask_cmd->add_option("--landmarks", mask.landmarks, "Landmark JSON ([[x, y], ...])");
  mask_cmd->add_option("--height", mask.height, "Mask height")->required();
  mask_cmd->add_option("--width", mask.width, "Mask width")->required();
  mask_cmd->add_option("--kind", mask.kind, "zm, om or cvm")
      ->check(CLI::IsMember({"zm", "om", "cvm"}));
  mask_cmd->add_option("--out", mask.out, "Output PNG")->required();

  ConfigSource rf;
  auto* rf_cmd = app.add_subcommand("rf", "Print receptive-field geometry per layer");
  rf_cmd->add_option("--config", rf.file, "Architecture key-value file");
  rf_cmd->add_option("--set", rf.overrides, "Override key=value")->allow_extra_args(false);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train with the joint objective");
  add_train_options(train_cmd, train_args);
  train_cmd->add_option("--out-dir", train_args.out_dir, "Run directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--manifest", eval.manifest, "Manifest to score")->required();
  eval_cmd->add_option("--mode", eval.mode, "classifier or seg-mean");
  eval_cmd->add_option("--out-dir", eval.out_dir, "Writes metrics.json, pr.csv, roc.csv");
  eval_cmd->add_option("--objectives", eval.objectives, "Manifest objective per head")
      ->delimiter(',');
  eval_cmd->add_option("--head", eval.head, "Head used by seg-mean");
  eval_cmd->add_option("--crop-size", eval.crop_size, "Centre crop (0 keeps full images)");
  eval_cmd->add_option("--threshold", eval.threshold, "Decision threshold");

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Fake probability for images of any size");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint directory")->required();
  infer_cmd->add_option("--image", infer.image, "One PNG");
  infer_cmd->add_option("--dir", infer.dir, "Directory of PNGs");
  infer_cmd->add_option("--mode", infer.mode, "classifier or seg-mean");
  infer_cmd->add_option("--head", infer.head, "Head used by seg-mean and heatmaps");
  infer_cmd->add_option("--crop-size", infer.crop_size, "Centre crop before inference");
  infer_cmd->add_option("--heatmap-dir", infer.heatmap_dir, "Write per-cell P(fake) PNGs");

  std::uint64_t gc_seed = 1;
  double gc_tolerance = 1e-6;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc_cmd->add_option("--seed", gc_seed, "Random seed");
  gc_cmd->add_option("--tolerance", gc_tolerance, "Maximum relative error");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train over a lambda_seg grid and seeds");
  add_train_options(ablate_cmd, ablate.train);
  ablate_cmd->add_option("--test-manifest", ablate.test_manifest, "Test manifest")->required();
  ablate_cmd->add_option("--objective", ablate.objective, "Manifest objective for the seg head");
  ablate_cmd->add_option("--lambdas", ablate.lambdas, "lambda_seg values")->delimiter(',');
  ablate_cmd->add_option("--seeds", ablate.seeds, "Runs per lambda (seeds seed, seed+1, ...)");
  ablate_cmd->add_option("--out-dir", ablate.train.out_dir, "Writes ablation.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigFailure;
  }

  try {
    if (*synth_cmd) return run_synth(g, synth);
    if (*mask_cmd) return run_mask(g, mask);
    if (*rf_cmd) return run_rf(g, rf);
    if (*train_cmd) return run_train(g, train_args);
    if (*eval_cmd) return run_eval(g, eval);
    if (*infer_cmd) return run_infer(g, infer);
    if (*gc_cmd) return run_gradcheck(g, gc_seed, gc_tolerance);
    if (*ablate_cmd) return run_ablate(g, ablate);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigFailure;
  }
  return kConfigFailure;
}
