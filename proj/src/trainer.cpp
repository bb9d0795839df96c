#include "lfd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "lfd/checkpoint.hpp"
#include "lfd/errors.hpp"
#include "lfd/ops.hpp"
#include "lfd/parallel.hpp"

namespace lfd {

using nlohmann::json;

// ---- Optimizer ------------------------------------------------------------

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamConfig& config) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.numel()), T{0});
      state.v.emplace_back(static_cast<std::size_t>(p.numel()), T{0});
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam state tracks " + std::to_string(state.m.size()) +
                        " tensors, got " + std::to_string(params.size()));
  }
  ++state.t;
  const auto t = static_cast<double>(state.t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T lr = static_cast<T>(config.lr);
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].values();
    const auto grad = std::as_const(params[i]).grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = grad[j];
      m[j] = b1 * m[j] + (T{1} - b1) * g;
      v[j] = b2 * v[j] + (T{1} - b2) * g * g;
      values[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
}

template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, const AdamConfig&);

// ---- Inference ------------------------------------------------------------

std::string to_string(PredictMode mode) {
  return mode == PredictMode::kClassifier ? "classifier" : "seg-mean";
}

PredictMode parse_predict_mode(const std::string& text) {
  if (text == "classifier") return PredictMode::kClassifier;
  if (text == "seg-mean" || text == "seg_mean") return PredictMode::kSegMean;
  throw ConfigError("unknown prediction mode '" + text + "' (expected classifier or seg-mean)");
}

std::vector<double> fake_probabilities(const ForwardOutput<float>& out, PredictMode mode,
                                       std::size_t head) {
  if (mode == PredictMode::kClassifier) {
    const auto probs = softmax(out.image_logits, 1);
    const auto n = out.image_logits.dim(0);
    std::vector<double> p(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) p[i] = probs[i * 2 + 1];
    return p;
  }
  if (head >= out.seg_logits.size()) {
    throw ConfigError("seg-mean prediction needs head " + std::to_string(head) + ", model has " +
                      std::to_string(out.seg_logits.size()));
  }
  const auto& logits = out.seg_logits[head];
  const auto probs = softmax(logits, 1);
  const auto n = logits.dim(0);
  const auto plane = logits.dim(2) * logits.dim(3);
  std::vector<double> p(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const float* fake = probs.data() + (i * 2 + 1) * plane;
    double sum = 0.0;
    for (std::int64_t k = 0; k < plane; ++k) sum += fake[k];
    p[i] = sum / static_cast<double>(plane);
  }
  return p;
}

std::vector<double> predict_images(const Model<float>& model, const Tensor<float>& images,
                                   PredictMode mode, std::size_t head) {
  return fake_probabilities(forward_eval(model, images), mode, head);
}

double predict_image(const Model<float>& model, const Tensor<float>& image, PredictMode mode,
                     std::size_t head) {
  if (image.rank() != 3) {
    throw DimensionError("predict_image expects 3×H×W, got " + shape_str(image.shape()));
  }
  const Tensor<float> batch(Shape{1, image.dim(0), image.dim(1), image.dim(2)},
                            std::vector<float>(image.values().begin(), image.values().end()));
  return predict_images(model, batch, mode, head).front();
}

// ---- Metrics --------------------------------------------------------------

Metrics score_metrics(std::span<const double> scores, std::span<const std::int32_t> labels,
                      double threshold) {
  if (scores.size() != labels.size()) {
    throw DimensionError(std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " labels");
  }
  Metrics m;
  m.threshold = threshold;
  m.count = static_cast<std::int64_t>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool fake = scores[i] >= threshold;
    if (labels[i] == 1) {
      (fake ? m.tp : m.fn)++;
    } else {
      (fake ? m.fp : m.tn)++;
    }
  }
  m.accuracy = m.count ? static_cast<double>(m.tp + m.tn) / static_cast<double>(m.count) : 0.0;

  const auto pos = static_cast<double>(m.tp + m.fn);
  const auto neg = static_cast<double>(m.fp + m.tn);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const auto inf = std::numeric_limits<double>::infinity();
  m.roc.push_back({inf, 0.0, 0.0});
  double tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == s; ++k) (labels[order[k]] == 1 ? tp : fp) += 1;
    m.roc.push_back({s, neg > 0 ? fp / neg : 0.0, pos > 0 ? tp / pos : 0.0});
    m.pr.push_back({s, pos > 0 ? tp / pos : 0.0, tp / (tp + fp)});
  }
  if (pos > 0 && neg > 0) {
    double area = 0.0;
    for (std::size_t i = 1; i < m.roc.size(); ++i) {
      area += (m.roc[i].x - m.roc[i - 1].x) * (m.roc[i].y + m.roc[i - 1].y) / 2.0;
    }
    m.auc = area;
  } else {
    m.auc = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

Evaluation evaluate(const Model<float>& model, const SampleCache& cache, const EvalOptions& opt) {
  const auto n = cache.size();
  const auto crop = opt.crop_size > 0 ? opt.crop_size : std::min(cache.height, cache.width);
  if (n > 0 && (crop > cache.height || crop > cache.width)) {
    throw DimensionError("eval crop " + std::to_string(crop) + " exceeds images of " +
                         std::to_string(cache.height) + "x" + std::to_string(cache.width));
  }
  if (opt.batch_size == 0) throw ConfigError("eval batch size must be positive");
  const auto row0 = (cache.height - crop) / 2;
  const auto col0 = (cache.width - crop) / 2;
  const auto heads = std::min<std::size_t>(model.seg_heads.size(), cache.num_objectives());

  struct SegCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  };
  const auto chunks = (n + opt.batch_size - 1) / opt.batch_size;
  std::vector<double> scores(n);
  std::vector<std::vector<SegCounts>> seg(chunks, std::vector<SegCounts>(heads));

  parallel_for(chunks, opt.threads, [&](std::size_t chunk) {
    const auto begin = chunk * opt.batch_size;
    const auto end = std::min(n, begin + opt.batch_size);
    const auto count = static_cast<std::int64_t>(end - begin);
    Tensor<float> images(Shape{count, 3, crop, crop});
    for (auto i = begin; i < end; ++i) {
      crop_into(cache, i, row0, col0, crop, images.data() + (i - begin) * 3 * crop * crop);
    }
    const auto out = forward_eval(model, images);
    const auto p = fake_probabilities(out, opt.mode, opt.head);
    std::copy(p.begin(), p.end(), scores.begin() + static_cast<std::ptrdiff_t>(begin));

    const auto plane = out.grid.rows * out.grid.cols;
    for (std::size_t h = 0; h < heads; ++h) {
      const auto probs = softmax(out.seg_logits[h], 1);
      auto& c = seg[chunk][h];
      for (auto i = begin; i < end; ++i) {
        const auto& full = cache.masks[i][h];
        Mask cropped(crop, crop);
        for (std::int64_t r = 0; r < crop; ++r) {
          std::copy_n(full.values.begin() + (row0 + r) * full.width + col0, crop,
                      cropped.values.begin() + r * crop);
        }
        const auto labels = extract_seg_labels(cropped, model.rf, out.grid);
        const float* fake = probs.data() + (static_cast<std::int64_t>(i - begin) * 2 + 1) * plane;
        for (std::int64_t k = 0; k < plane; ++k) {
          const bool pred = fake[k] >= 0.5f;
          const bool truth = labels.labels[static_cast<std::size_t>(k)] == 1;
          (truth ? (pred ? c.tp : c.fn) : (pred ? c.fp : c.tn))++;
        }
      }
    }
  });

  Evaluation ev;
  ev.metrics = score_metrics(scores, cache.labels, opt.threshold);
  for (std::size_t h = 0; h < heads; ++h) {
    SegCounts total;
    for (const auto& chunk : seg) {
      total.tp += chunk[h].tp;
      total.fp += chunk[h].fp;
      total.tn += chunk[h].tn;
      total.fn += chunk[h].fn;
    }
    SegMetrics sm;
    sm.locations = total.tp + total.fp + total.tn + total.fn;
    sm.pixel_accuracy =
        sm.locations ? static_cast<double>(total.tp + total.tn) / static_cast<double>(sm.locations)
                     : 0.0;
    const auto uni = total.tp + total.fp + total.fn;
    sm.iou = uni ? static_cast<double>(total.tp) / static_cast<double>(uni) : 1.0;
    ev.metrics.seg.push_back(sm);
  }
  ev.scores = std::move(scores);
  return ev;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt_threshold(double t) {
  if (std::isinf(t)) return "inf";
  return json(t).dump();
}

}  // namespace

std::string metrics_json(const Metrics& m) {
  json seg = json::array();
  for (const auto& s : m.seg) {
    seg.push_back({{"locations", s.locations},
                   {"pixel_accuracy", s.pixel_accuracy},
                   {"iou", s.iou}});
  }
  const json j = {{"count", m.count},
                  {"threshold", m.threshold},
                  {"accuracy", m.accuracy},
                  {"auc", number_or_null(m.auc)},
                  {"confusion", {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}}},
                  {"seg", seg}};
  return j.dump(2);
}

void write_metrics(const Metrics& m, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "metrics.json", metrics_json(m) + "\n");
  std::string pr = "threshold,precision,recall\n";
  for (const auto& p : m.pr) {
    pr += fmt_threshold(p.threshold) + "," + json(p.y).dump() + "," + json(p.x).dump() + "\n";
  }
  write_file(dir / "pr.csv", pr);
  std::string roc = "threshold,fpr,tpr\n";
  for (const auto& p : m.roc) {
    roc += fmt_threshold(p.threshold) + "," + json(p.x).dump() + "," + json(p.y).dump() + "\n";
  }
  write_file(dir / "roc.csv", roc);
}

// ---- Training -------------------------------------------------------------

std::string to_json_line(const EpochRecord& r) {
  const json j = {{"epoch", r.epoch},       {"loss", r.loss},
                  {"loss_cls", r.loss_cls}, {"loss_seg", r.loss_seg},
                  {"val_accuracy", r.val_accuracy}, {"val_auc", number_or_null(r.val_auc)}};
  return j.dump();
}

std::vector<std::size_t> resolve_objectives(const Manifest& manifest, const ArchConfig& arch,
                                            const TrainConfig& config) {
  validate_weights(config.weights);
  const auto k = config.weights.num_seg();
  if (static_cast<std::size_t>(arch.num_seg_heads) != k) {
    throw ConfigError("architecture has " + std::to_string(arch.num_seg_heads) +
                      " segmentation heads but " + std::to_string(k) + " seg weights are given");
  }
  std::vector<std::size_t> idx;
  if (k == 0 && config.objectives.empty()) return idx;
  if (config.objectives.empty()) {
    if (manifest.num_objectives() != k) {
      throw ConfigError("manifest has " + std::to_string(manifest.num_objectives()) +
                        " objectives, config expects k = " + std::to_string(k) +
                        "; name them explicitly to select a subset");
    }
    idx.resize(k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  if (config.objectives.size() != k) {
    throw ConfigError(std::to_string(config.objectives.size()) + " objectives named for k = " +
                      std::to_string(k) + " segmentation heads");
  }
  for (const auto& name : config.objectives) idx.push_back(manifest.objective_index(name));
  return idx;
}

TrainResult train(const Manifest& train_set, const Manifest& val_set, const ArchConfig& arch,
                  const TrainConfig& config, const std::optional<std::filesystem::path>& out_dir,
                  const EpochCallback& on_epoch) {
  const auto train_obj = resolve_objectives(train_set, arch, config);
  const auto train_cache = load_samples(train_set, train_obj, config.threads);
  const auto val_cache = load_samples(val_set, {}, config.threads);
  return train(train_cache, val_cache, arch, config, out_dir, on_epoch);
}

TrainResult train(const SampleCache& train_set, const SampleCache& val_set,
                  const ArchConfig& arch, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& out_dir,
                  const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  validate_weights(config.weights);
  const auto k = config.weights.num_seg();
  if (static_cast<std::size_t>(arch.num_seg_heads) != k) {
    throw ConfigError("architecture has " + std::to_string(arch.num_seg_heads) +
                      " segmentation heads but " + std::to_string(k) + " seg weights are given");
  }
  if (train_set.num_objectives() < k) {
    throw ConfigError("training data provides " + std::to_string(train_set.num_objectives()) +
                      " masks per sample, k = " + std::to_string(k));
  }
  if (train_set.size() == 0 || val_set.size() == 0) throw ConfigError("empty train or val set");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");

  std::ofstream history_file;
  if (out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir->string() + ": " + ec.message());
    history_file.open(*out_dir / "history.jsonl");
    if (!history_file) throw IoError("cannot write " + (*out_dir / "history.jsonl").string());
  }

  TrainResult result;
  auto model = build_model<float>(arch, config.seed);
  std::vector<Tensor<float>> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  AdamState<float> adam;

  const CropSpec crop{config.random_crop ? CropMode::kRandom : CropMode::kCenter, arch.input_size};
  EvalOptions val_opt;
  val_opt.crop_size = arch.input_size;
  val_opt.threads = config.threads;

  std::int64_t since_best = 0;
  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    BatchIterator batches(train_set, config.batch_size, crop,
                          config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_seg.assign(k, 0.0);
    std::size_t seen = 0;
    Batch batch;
    while (batches.next(batch)) {
      Tape<float> tape;
      const auto out = forward(model, batch.images, Mode::kTrain, &tape);
      const auto cls = cls_loss(out.image_logits, std::span<const std::int32_t>(batch.labels), &tape);
      std::vector<Tensor<float>> segs;
      for (std::size_t h = 0; h < k; ++h) {
        std::vector<SegLabelGrid> grids;
        for (const auto& mask : batch.masks[h]) {
          grids.push_back(extract_seg_labels(mask, model.rf, out.grid));
        }
        segs.push_back(seg_loss(out.seg_logits[h], std::span<const SegLabelGrid>(grids), &tape));
      }
      auto total = joint_loss(config.weights, cls, std::span<const Tensor<float>>(segs), &tape);
      model.zero_grad();
      backward(total, tape);
      adam_step(std::span<Tensor<float>>(params), adam, config.adam);

      const auto n = static_cast<double>(batch.labels.size());
      rec.loss += n * total.item();
      rec.loss_cls += n * cls.item();
      for (std::size_t h = 0; h < k; ++h) rec.loss_seg[h] += n * segs[h].item();
      seen += batch.labels.size();
    }
    rec.loss /= static_cast<double>(seen);
    rec.loss_cls /= static_cast<double>(seen);
    for (auto& l : rec.loss_seg) l /= static_cast<double>(seen);

    const auto val = evaluate(model, val_set, val_opt);
    rec.val_accuracy = val.metrics.accuracy;
    rec.val_auc = val.metrics.auc;
    result.history.push_back(rec);
    if (history_file) history_file << to_json_line(rec) << '\n' << std::flush;
    if (on_epoch) on_epoch(rec);

    if (rec.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = rec.val_accuracy;
      result.best_epoch = epoch;
      result.best_model = model.clone();
      if (out_dir) save_checkpoint(model, *out_dir / "best");
      since_best = 0;
    } else {
      ++since_best;
    }
    if (out_dir && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03lld", static_cast<long long>(epoch));
      save_checkpoint(model, *out_dir / name);
    }
    if (rec.val_accuracy >= config.stop_at_val_accuracy) break;
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---- Ablation -------------------------------------------------------------

std::vector<AblationRow> run_ablation(const SampleCache& train_set, const SampleCache& val_set,
                                      const SampleCache& test_set, const ArchConfig& arch,
                                      const TrainConfig& base, std::span<const double> lambdas,
                                      std::span<const std::uint64_t> seeds, std::size_t threads) {
  if (arch.num_seg_heads != 1) throw ConfigError("ablation needs exactly one segmentation head");
  if (test_set.num_objectives() < 1) throw ConfigError("ablation test set needs a mask objective");
  std::vector<AblationRow> rows(lambdas.size() * seeds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].lambda_seg = lambdas[i / seeds.size()];
    rows[i].seed = seeds[i % seeds.size()];
    TrainConfig check = base;
    check.weights = {1.0 - rows[i].lambda_seg, {rows[i].lambda_seg}};
    validate_weights(check.weights);
  }
  // Runs share the thread budget; each run is single-threaded inside.
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    auto& row = rows[i];
    TrainConfig config = base;
    config.weights = {1.0 - row.lambda_seg, {row.lambda_seg}};
    config.seed = row.seed;
    config.threads = 1;
    const auto result = train(train_set, val_set, arch, config);
    EvalOptions opt;
    opt.crop_size = arch.input_size;
    const auto eval = evaluate(result.best_model, test_set, opt);
    row.accuracy = eval.metrics.accuracy;
    row.auc = eval.metrics.auc;
    row.iou = eval.metrics.seg.empty() ? 0.0 : eval.metrics.seg[0].iou;
    row.best_epoch = result.best_epoch;
    row.epochs_run = static_cast<std::int64_t>(result.history.size());
    row.seconds = result.seconds;
  });
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "lambda,seed,accuracy,auc,iou,best_epoch,epochs\n";
  for (const auto& r : rows) {
    out += json(r.lambda_seg).dump() + "," + std::to_string(r.seed) + "," +
           json(r.accuracy).dump() + "," + (std::isfinite(r.auc) ? json(r.auc).dump() : std::string("nan")) + "," +
           json(r.iou).dump() + "," + std::to_string(r.best_epoch) + "," +
           std::to_string(r.epochs_run) + "\n";
  }
  return out;
}

}  // namespace lfd
