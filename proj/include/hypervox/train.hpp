#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypervox/data.hpp"
#include "hypervox/netspec.hpp"
#include "hypervox/network.hpp"

namespace hypervox {

struct TrainConfig {
  std::size_t batch_size = 3;         // S
  std::size_t eval_batch_size = 256;  // T
  int max_epoch = 30;
  std::uint64_t seed = 1;
  float l1_lambda = 1e-4f;
  int runs = 3;
  float base_lr = 0.001f;
  float momentum = 0.9f;
  /// Worker threads for evaluation; 0 picks the hardware concurrency.
  unsigned threads = 0;

  void validate() const;
};

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int nclass);

  int nclass() const noexcept { return nclass_; }
  void add(int truth, int predicted);
  std::int64_t at(int truth, int predicted) const;
  std::int64_t total() const;
  std::int64_t trace() const;
  /// trace / total
  double accuracy() const;
  std::span<const std::int64_t> counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int nclass_ = 0;
  std::vector<std::int64_t> counts_;
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

struct EvalPoint {
  int epoch = 0;                // epochs completed when measured
  std::size_t iteration = 0;    // training iterations completed when measured
  double accuracy = 0.0;

  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct RunReport {
  std::vector<EvalPoint> evaluations;  // [0] is the pre-training evaluation
  std::vector<float> iteration_loss;   // mean batch loss per training iteration
  ConfusionMatrix confusion;           // of the last evaluation
  std::size_t param_count = 0;
  std::size_t trainable_param_count = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double wall_seconds = 0.0;           // process CPU time
  EvalPoint early;

  double final_accuracy() const { return evaluations.empty() ? 0.0 : evaluations.back().accuracy; }
};

/// Fills `out[i]` with the predicted class index of `pixels[i]`.
using BatchPredictor = std::function<void(std::span<const LabeledPixel> pixels, std::span<int> out)>;

/// Accuracy and confusion matrix of a predictor over `test`, in batches of
/// `batch_size`. Throws InputError on an empty test set.
EvalResult evaluate(const BatchPredictor& predict, std::span<const LabeledPixel> test, int nclass,
                    std::size_t batch_size);

/// Inference-mode evaluation of a network; batches may run on several
/// threads, the result does not depend on the thread count.
EvalResult evaluate(const Network& net, const HyperCube& cube, std::span<const LabeledPixel> test,
                    std::size_t batch_size, unsigned threads = 0);

/// First evaluation whose accuracy reaches 95% of the final one.
EvalPoint early_point(std::span<const EvalPoint> evaluations, double fraction = 0.95);
inline EvalPoint early_point(const RunReport& report) { return early_point(report.evaluations); }

/// Trains `net` for cfg.max_epoch epochs: one evaluation before training and
/// one after each epoch. `seed` drives batch order and dropout masks.
RunReport run(Network& net, const HyperCube& cube, const DatasetSplit& split, const TrainConfig& cfg);

/// Mean loss over the `window` iterations after `iteration` compared with the
/// `window` iterations before it. Returns {before, after}.
std::pair<double, double> loss_window_means(std::span<const float> losses, std::size_t iteration,
                                            std::size_t window);

struct RunsSummary {
  std::vector<RunReport> reports;
  std::vector<std::uint64_t> seeds;
  double mean_accuracy = 0.0;
  double max_deviation = 0.0;   // max |acc_i - mean|, as a fraction
  bool deviation_flag = false;  // max_deviation above 0.2 points
};

/// Per-run seeds of averaged_runs: seed + r.
std::vector<std::uint64_t> run_seeds(const TrainConfig& cfg);

/// One fresh split and fresh network per seed.
RunsSummary averaged_runs(const NetworkSpec& spec, const Dataset& dataset, const SplitConfig& split,
                          const TrainConfig& cfg, std::span<const std::uint64_t> seeds);
RunsSummary averaged_runs(const NetworkSpec& spec, const Dataset& dataset, const SplitConfig& split,
                          const TrainConfig& cfg);

/// Reduces a list of accuracies to (mean, max deviation, flag).
RunsSummary summarize(std::vector<RunReport> reports, std::vector<std::uint64_t> seeds);

struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> ids;  // predicted class id (1..nclass), row-major
};

/// Predicts every pixel of the cube, labelled or not.
LabelImage classify_map(const Network& net, const HyperCube& cube, unsigned threads = 0);

/// Split seed and run seed of one training run are derived from this seed.
struct RunSeeds {
  std::uint64_t split;
  std::uint64_t init;
  std::uint64_t train;
};
RunSeeds derive_run_seeds(std::uint64_t seed);

/// Deterministic fields only; wall time is reported separately.
nlohmann::ordered_json report_to_json(const RunReport& report);
nlohmann::ordered_json timing_to_json(const RunReport& report);
nlohmann::ordered_json summary_to_json(const RunsSummary& summary);
std::string loss_curve_csv(const RunReport& report);
std::string accuracy_curve_csv(const RunReport& report);
/// Binary PGM (P5), one byte per pixel holding the class id.
std::string to_pgm(const LabelImage& image);
nlohmann::ordered_json legend_json(const GroundTruth& gt);

}  // namespace hypervox
