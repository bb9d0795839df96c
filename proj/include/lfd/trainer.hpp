#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfd/dataio.hpp"
#include "lfd/model.hpp"
#include "lfd/objective.hpp"

namespace lfd {

// ---- Optimizer ------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t t = 0;
  std::vector<std::vector<T>> m;  // one per parameter, allocated on first step
  std::vector<std::vector<T>> v;
};

// One bias-corrected Adam update of every tensor in `params` from its grad:
//   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²,
//   p ← p − lr·(m/(1−β1^t)) / (sqrt(v/(1−β2^t)) + ε).
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamConfig& config);

// ---- Inference ------------------------------------------------------------

enum class PredictMode { kClassifier, kSegMean };

std::string to_string(PredictMode mode);
PredictMode parse_predict_mode(const std::string& text);  // "classifier" | "seg-mean"

// P(fake) per image: softmax(image_logits)[1], or the grid mean of
// softmax(seg_logits[head])[1].
std::vector<double> fake_probabilities(const ForwardOutput<float>& out, PredictMode mode,
                                       std::size_t head);

// images N×3×H×W (any H, W covered by the receptive field).
std::vector<double> predict_images(const Model<float>& model, const Tensor<float>& images,
                                   PredictMode mode, std::size_t head = 0);
double predict_image(const Model<float>& model, const Tensor<float>& image, PredictMode mode,
                     std::size_t head = 0);

// ---- Metrics --------------------------------------------------------------

struct CurvePoint {
  double threshold = 0.0;  // scores >= threshold are called fake
  double x = 0.0;          // ROC: fpr; PR: recall
  double y = 0.0;          // ROC: tpr; PR: precision
};

struct SegMetrics {
  std::int64_t locations = 0;
  double pixel_accuracy = 0.0;  // at grid locations, threshold 0.5
  double iou = 0.0;             // positive class, pooled over the whole set
};

struct Metrics {
  std::int64_t count = 0;
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double threshold = 0.5;
  double accuracy = 0.0;
  double auc = 0.0;  // NaN when only one class is present
  std::vector<CurvePoint> roc;
  std::vector<CurvePoint> pr;
  std::vector<SegMetrics> seg;  // one per head with an available mask
};

// Confusion counts at `threshold` plus threshold sweeps over the distinct
// scores. The ROC starts at (0, 0) and ends at (1, 1); AUC is the trapezoid
// area under it, which equals the Mann-Whitney statistic with ties as 1/2.
Metrics score_metrics(std::span<const double> scores, std::span<const std::int32_t> labels,
                      double threshold = 0.5);

struct EvalOptions {
  PredictMode mode = PredictMode::kClassifier;
  std::size_t head = 0;
  std::int64_t crop_size = 0;  // centre crop; 0 uses the full image
  double threshold = 0.5;
  std::size_t batch_size = 16;
  std::size_t threads = 1;
};

struct Evaluation {
  Metrics metrics;
  std::vector<double> scores;  // per sample, cache order
};

// Eval-mode pass over the cache. Samples are processed in fixed chunks of
// batch_size spread over threads, so results do not depend on the thread
// count. Segmentation metrics are reported for head h when the cache holds
// a mask for objective h.
Evaluation evaluate(const Model<float>& model, const SampleCache& cache, const EvalOptions& options);

// metrics.json, pr.csv (threshold,precision,recall), roc.csv (threshold,fpr,tpr).
void write_metrics(const Metrics& metrics, const std::filesystem::path& dir);
std::string metrics_json(const Metrics& metrics);

// ---- Training -------------------------------------------------------------

struct TrainConfig {
  std::int64_t epochs = 20;
  std::size_t batch_size = 32;
  AdamConfig adam;
  LossWeights weights;
  // Manifest objective per segmentation head; empty means "all manifest
  // objectives", which then must match the head count.
  std::vector<std::string> objectives;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // epochs; 0 keeps only the best
  std::int64_t patience = 5;
  double stop_at_val_accuracy = 1.0;  // nothing can beat it
  bool random_crop = true;
  std::size_t threads = 1;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double loss = 0.0;
  double loss_cls = 0.0;
  std::vector<double> loss_seg;
  double val_accuracy = 0.0;
  double val_auc = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

std::string to_json_line(const EpochRecord& record);

struct TrainResult {
  std::vector<EpochRecord> history;
  std::int64_t best_epoch = 0;
  double best_val_accuracy = -1.0;
  Model<float> best_model;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Checks weights, head count and objectives; returns the manifest objective
// index for each head. Throws ConfigError.
std::vector<std::size_t> resolve_objectives(const Manifest& manifest, const ArchConfig& arch,
                                            const TrainConfig& config);

// Minimizes the joint loss with Adam. Deterministic given the seed. When
// out_dir is set, writes history.jsonl, best/ and periodic epoch_NNN/
// checkpoints there.
TrainResult train(const Manifest& train_set, const Manifest& val_set, const ArchConfig& arch,
                  const TrainConfig& config,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const EpochCallback& on_epoch = {});

// Same, from caches loaded with resolve_objectives' objective order.
TrainResult train(const SampleCache& train_set, const SampleCache& val_set,
                  const ArchConfig& arch, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const EpochCallback& on_epoch = {});

// ---- Ablation -------------------------------------------------------------

struct AblationRow {
  double lambda_seg = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double auc = 0.0;
  double iou = 0.0;  // head 0 against the test cache's first objective
  std::int64_t best_epoch = 0;
  std::int64_t epochs_run = 0;
  double seconds = 0.0;
};

// One training run per (λ_seg, seed) with weights (1 − λ_seg, [λ_seg]) on a
// one-head architecture, scored on `test` in classifier mode with a centre
// crop of arch.input_size. Runs are spread over `threads`; rows come back in
// lambda-major order whatever the thread count.
std::vector<AblationRow> run_ablation(const SampleCache& train_set, const SampleCache& val_set,
                                      const SampleCache& test_set, const ArchConfig& arch,
                                      const TrainConfig& base, std::span<const double> lambdas,
                                      std::span<const std::uint64_t> seeds, std::size_t threads);

// lambda,seed,accuracy,auc,iou,best_epoch,epochs
std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace lfd
