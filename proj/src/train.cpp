#include "hypervox/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <numeric>
#include <thread>

#include "hypervox/error.hpp"
#include "hypervox/optim.hpp"

namespace hypervox {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputError("train batch size S must be >= 1");
  if (eval_batch_size < 1) throw InputError("eval batch size T must be >= 1");
  if (max_epoch < 0) throw InputError("max_epoch must be >= 0");
  if (runs < 1) throw InputError("runs must be >= 1");
  if (l1_lambda < 0.0f) throw InputError("l1 lambda must be >= 0");
  if (!(base_lr > 0.0f)) throw InputError("learning rate must be positive");
}

ConfusionMatrix::ConfusionMatrix(int nclass) : nclass_(nclass) {
  if (nclass < 1) throw InputError("confusion matrix needs nclass >= 1");
  counts_.assign(static_cast<std::size_t>(nclass) * nclass, 0);
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= nclass_ || predicted < 0 || predicted >= nclass_) {
    throw InputError("confusion matrix index out of range");
  }
  ++counts_[static_cast<std::size_t>(truth) * nclass_ + predicted];
}

std::int64_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_.at(static_cast<std::size_t>(truth) * nclass_ + predicted);
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int i = 0; i < nclass_; ++i) t += at(i, i);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

namespace {

unsigned resolve_threads(unsigned requested, std::size_t work_items) {
  unsigned t = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(1, work_items)));
}

// Runs body(begin, end) over [0, count) split into contiguous slices.
template <typename Body>
void parallel_ranges(std::size_t count, unsigned threads, Body body) {
  if (threads <= 1 || count < 2) {
    body(std::size_t{0}, count);
    return;
  }
  std::vector<std::thread> workers;
  const std::size_t per = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * per;
    const std::size_t end = std::min(count, begin + per);
    if (begin >= end) break;
    workers.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& w : workers) w.join();
}

EvalResult tally(std::span<const LabeledPixel> test, std::span<const int> predictions, int nclass) {
  EvalResult result;
  result.confusion = ConfusionMatrix(nclass);
  for (std::size_t i = 0; i < test.size(); ++i) result.confusion.add(test[i].label, predictions[i]);
  result.accuracy = result.confusion.accuracy();
  return result;
}

}  // namespace

EvalResult evaluate(const BatchPredictor& predict, std::span<const LabeledPixel> test, int nclass,
                    std::size_t batch_size) {
  if (test.empty()) throw InputError("cannot evaluate on an empty test set");
  if (batch_size < 1) throw InputError("eval batch size must be >= 1");
  std::vector<int> predictions(test.size());
  for (std::size_t start = 0; start < test.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, test.size() - start);
    predict(test.subspan(start, len), std::span<int>(predictions).subspan(start, len));
  }
  return tally(test, predictions, nclass);
}

EvalResult evaluate(const Network& net, const HyperCube& cube, std::span<const LabeledPixel> test,
                    std::size_t batch_size, unsigned threads) {
  if (test.empty()) throw InputError("cannot evaluate on an empty test set");
  if (batch_size < 1) throw InputError("eval batch size must be >= 1");
  const int n = net.spec().n;
  std::vector<int> predictions(test.size());
  const std::size_t batches = (test.size() + batch_size - 1) / batch_size;
  parallel_ranges(batches, resolve_threads(threads, batches), [&](std::size_t b0, std::size_t b1) {
    const std::size_t end = std::min(test.size(), b1 * batch_size);
    for (std::size_t i = b0 * batch_size; i < end; ++i) {
      predictions[i] = static_cast<int>(net.predict(extract_voxel(cube, test[i].x, test[i].y, n)));
    }
  });
  return tally(test, predictions, net.nclass());
}

EvalPoint early_point(std::span<const EvalPoint> evaluations, double fraction) {
  if (evaluations.empty()) throw InputError("early point needs at least one evaluation");
  const double threshold = fraction * evaluations.back().accuracy;
  for (const auto& e : evaluations) {
    if (e.accuracy >= threshold) return e;
  }
  return evaluations.back();
}

RunSeeds derive_run_seeds(std::uint64_t seed) {
  return {derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3)};
}

RunReport run(Network& net, const HyperCube& cube, const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (net.spec().f != cube.bands) {
    throw ArchitectureError("network expects " + std::to_string(net.spec().f) + " bands, cube has " +
                            std::to_string(cube.bands));
  }
  for (const auto* set : {&split.train, &split.test}) {
    for (const auto& p : *set) {
      if (p.label < 0 || p.label >= net.nclass()) {
        throw InputError("label " + std::to_string(p.label + 1) + " exceeds the network's " +
                         std::to_string(net.nclass()) + " classes");
      }
      if (p.x < 0 || p.y < 0 || p.x >= cube.width || p.y >= cube.height) {
        throw InputError("split pixel lies outside the cube");
      }
    }
  }
  if (split.test.empty()) throw InputError("test split is empty");
  if (split.train.empty() && cfg.max_epoch > 0) throw InputError("train split is empty");

  const std::clock_t started = std::clock();
  RunReport report;
  report.param_count = net.parameter_count();
  report.trainable_param_count = net.trainable_parameter_count();
  report.train_size = split.train.size();
  report.test_size = split.test.size();

  Prng order_rng(derive_seed(cfg.seed, 11));
  Prng dropout_rng(derive_seed(cfg.seed, 12));
  SgdMomentum optimizer(net.trainable_parameters(), cfg.momentum);
  const auto trainable = net.trainable_parameters();
  const LrSchedule schedule{cfg.base_lr, std::max(cfg.max_epoch, 1)};
  const int n = net.spec().n;

  auto record = [&](int epoch, std::size_t iteration) {
    EvalResult r = evaluate(net, cube, split.test, cfg.eval_batch_size, cfg.threads);
    report.evaluations.push_back({epoch, iteration, r.accuracy});
    report.confusion = std::move(r.confusion);
  };

  record(0, 0);
  std::size_t iteration = 0;
  for (int epoch = 0; epoch < cfg.max_epoch; ++epoch) {
    const float lr = lr_at(schedule, epoch);
    net.set_mode(Mode::Train);
    for (const auto& batch : epoch_batches(split.train.size(), cfg.batch_size, order_rng)) {
      net.zero_grad();
      const float weight = 1.0f / static_cast<float>(batch.size());
      double loss = 0.0;
      for (std::size_t idx : batch) {
        const LabeledPixel& p = split.train[idx];
        loss += net.accumulate_gradients(extract_voxel(cube, p.x, p.y, n), static_cast<std::size_t>(p.label),
                                         dropout_rng, weight);
      }
      apply_l1(trainable, cfg.l1_lambda);
      optimizer.step(lr);
      report.iteration_loss.push_back(static_cast<float>(loss / static_cast<double>(batch.size())));
      ++iteration;
    }
    net.set_mode(Mode::Infer);
    record(epoch + 1, iteration);
  }
  net.set_mode(Mode::Infer);

  report.early = early_point(report.evaluations);
  report.wall_seconds = static_cast<double>(std::clock() - started) / CLOCKS_PER_SEC;
  return report;
}

std::pair<double, double> loss_window_means(std::span<const float> losses, std::size_t iteration,
                                            std::size_t window) {
  if (iteration == 0 || iteration >= losses.size() || window == 0) {
    throw InputError("loss window needs iterations on both sides of " + std::to_string(iteration));
  }
  const std::size_t before_start = iteration > window ? iteration - window : 0;
  const std::size_t after_end = std::min(losses.size(), iteration + window);
  double before = 0.0, after = 0.0;
  for (std::size_t i = before_start; i < iteration; ++i) before += losses[i];
  for (std::size_t i = iteration; i < after_end; ++i) after += losses[i];
  return {before / static_cast<double>(iteration - before_start),
          after / static_cast<double>(after_end - iteration)};
}

std::vector<std::uint64_t> run_seeds(const TrainConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < cfg.runs; ++r) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(r));
  return seeds;
}

RunsSummary summarize(std::vector<RunReport> reports, std::vector<std::uint64_t> seeds) {
  if (reports.empty()) throw InputError("no runs to summarize");
  RunsSummary s;
  // Running mean: identical accuracies give exactly that accuracy back.
  for (std::size_t i = 0; i < reports.size(); ++i) {
    s.mean_accuracy += (reports[i].final_accuracy() - s.mean_accuracy) / static_cast<double>(i + 1);
  }
  for (const auto& r : reports) s.max_deviation = std::max(s.max_deviation, std::fabs(r.final_accuracy() - s.mean_accuracy));
  s.deviation_flag = s.max_deviation > 0.002;
  s.reports = std::move(reports);
  s.seeds = std::move(seeds);
  return s;
}

RunsSummary averaged_runs(const NetworkSpec& spec, const Dataset& dataset, const SplitConfig& split,
                          const TrainConfig& cfg, std::span<const std::uint64_t> seeds) {
  cfg.validate();
  if (seeds.empty()) throw InputError("averaged_runs needs at least one seed");
  validate(spec);
  std::vector<RunReport> reports;
  for (std::uint64_t seed : seeds) {
    const RunSeeds rs = derive_run_seeds(seed);
    Prng split_rng(rs.split);
    const DatasetSplit ds = stratified_split(dataset.gt, split, split_rng);
    Prng init_rng(rs.init);
    Network net = Network::build(spec, init_rng);
    TrainConfig run_cfg = cfg;
    run_cfg.seed = rs.train;
    reports.push_back(run(net, dataset.cube, ds, run_cfg));
  }
  return summarize(std::move(reports), {seeds.begin(), seeds.end()});
}

RunsSummary averaged_runs(const NetworkSpec& spec, const Dataset& dataset, const SplitConfig& split,
                          const TrainConfig& cfg) {
  const auto seeds = run_seeds(cfg);
  return averaged_runs(spec, dataset, split, cfg, seeds);
}

LabelImage classify_map(const Network& net, const HyperCube& cube, unsigned threads) {
  if (net.spec().f != cube.bands) {
    throw ArchitectureError("network expects " + std::to_string(net.spec().f) + " bands, cube has " +
                            std::to_string(cube.bands));
  }
  if (net.nclass() > 255) throw InputError("PGM label maps hold at most 255 classes");
  LabelImage image;
  image.width = cube.width;
  image.height = cube.height;
  image.ids.assign(static_cast<std::size_t>(cube.width) * cube.height, 0);
  const auto rows = static_cast<std::size_t>(cube.height);
  parallel_ranges(rows, resolve_threads(threads, rows), [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < cube.width; ++x) {
        const auto cls = net.predict(extract_voxel(cube, x, static_cast<int>(y), net.spec().n));
        image.ids[y * static_cast<std::size_t>(cube.width) + x] = static_cast<std::uint8_t>(cls + 1);
      }
    }
  });
  return image;
}

namespace {

ordered_json point_json(const EvalPoint& p) {
  ordered_json j;
  j["epoch"] = p.epoch;
  j["iteration"] = p.iteration;
  j["accuracy"] = p.accuracy;
  return j;
}

ordered_json confusion_json(const ConfusionMatrix& m) {
  ordered_json rows = ordered_json::array();
  for (int t = 0; t < m.nclass(); ++t) {
    ordered_json row = ordered_json::array();
    for (int p = 0; p < m.nclass(); ++p) row.push_back(m.at(t, p));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
std::string shortest(T v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

ordered_json report_to_json(const RunReport& report) {
  ordered_json j;
  j["final_accuracy"] = report.final_accuracy();
  j["early"] = point_json(report.early);
  j["param_count"] = report.param_count;
  j["trainable_param_count"] = report.trainable_param_count;
  j["train_size"] = report.train_size;
  j["test_size"] = report.test_size;
  j["iterations"] = report.iteration_loss.size();
  ordered_json evals = ordered_json::array();
  for (const auto& e : report.evaluations) evals.push_back(point_json(e));
  j["evaluations"] = std::move(evals);
  j["confusion"] = confusion_json(report.confusion);
  j["iteration_loss"] = report.iteration_loss;
  return j;
}

ordered_json timing_to_json(const RunReport& report) {
  ordered_json j;
  j["cpu_seconds"] = report.wall_seconds;
  j["iterations"] = report.iteration_loss.size();
  j["early_iteration"] = report.early.iteration;
  return j;
}

ordered_json summary_to_json(const RunsSummary& summary) {
  ordered_json j;
  j["runs"] = summary.reports.size();
  j["seeds"] = summary.seeds;
  ordered_json accs = ordered_json::array();
  for (const auto& r : summary.reports) accs.push_back(r.final_accuracy());
  j["accuracies"] = std::move(accs);
  j["mean_accuracy"] = summary.mean_accuracy;
  j["max_deviation"] = summary.max_deviation;
  j["deviation_flag"] = summary.deviation_flag;
  return j;
}

std::string loss_curve_csv(const RunReport& report) {
  std::string out = "iteration,loss\n";
  for (std::size_t i = 0; i < report.iteration_loss.size(); ++i) {
    out += std::to_string(i + 1) + "," + shortest(report.iteration_loss[i]) + "\n";
  }
  return out;
}

std::string accuracy_curve_csv(const RunReport& report) {
  std::string out = "iteration,accuracy\n";
  for (const auto& e : report.evaluations) out += std::to_string(e.iteration) + "," + shortest(e.accuracy) + "\n";
  return out;
}

std::string to_pgm(const LabelImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.ids.data()), image.ids.size());
  return out;
}

ordered_json legend_json(const GroundTruth& gt) {
  ordered_json j = ordered_json::array();
  for (int id = 1; id <= gt.nclass; ++id) {
    ordered_json e;
    e["id"] = id;
    e["name"] = gt.class_name(id);
    j.push_back(std::move(e));
  }
  return j;
}

}  // namespace hypervox
