#include "hypervox/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hypervox/data.hpp"
#include "hypervox/error.hpp"
#include "hypervox/netspec.hpp"
#include "hypervox/network.hpp"
#include "hypervox/train.hpp"
#include "hypervox/transfer.hpp"

namespace hypervox {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Options {
  // dataset
  std::string cube;
  std::string gt;
  std::string scale = "global-max";
  // architecture
  std::string family = "d";
  int spatial = 3;
  std::string spec_file;
  int bands = 103;
  int classes = 9;
  // training
  std::string split = "frac:0.05";
  std::uint64_t seed = 1;
  int epochs = 30;
  std::size_t batch = 3;
  std::size_t eval_batch = 256;
  float l1 = 1e-4f;
  int runs = 3;
  float lr = 0.001f;
  unsigned threads = 0;
  // checkpoints / transfer
  std::string checkpoint;
  std::string init_from;
  bool freeze_features = false;
  std::vector<double> fractions;
  std::string out_dir;
};

std::string default_out_dir() {
  if (const char* env = std::getenv("HYPERVOX_OUT"); env != nullptr && *env != '\0') return env;
  return "hypervox-out";
}

TrainConfig train_config(const Options& o) {
  TrainConfig cfg;
  cfg.batch_size = o.batch;
  cfg.eval_batch_size = o.eval_batch;
  cfg.max_epoch = o.epochs;
  cfg.seed = o.seed;
  cfg.l1_lambda = o.l1;
  cfg.runs = o.runs;
  cfg.base_lr = o.lr;
  cfg.threads = o.threads;
  cfg.validate();
  return cfg;
}

NetworkSpec resolve_spec(const Options& o, int n, int f, int nclass) {
  if (!o.spec_file.empty()) {
    NetworkSpec spec = load_spec_file(o.spec_file, n, f, nclass);
    validate(spec);
    return spec;
  }
  return registry(parse_family(o.family), n, f, nclass);
}

Dataset load(const Options& o) {
  if (o.cube.empty() || o.gt.empty()) throw InputError("--cube and --gt are required");
  Dataset ds = load_dataset(o.cube, o.gt, parse_scale_mode(o.scale));
  ds.name = fs::path(o.cube).stem().string();
  return ds;
}

fs::path prepare_out(const Options& o) {
  fs::path dir = o.out_dir.empty() ? fs::path(default_out_dir()) : fs::path(o.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

std::string percent(double accuracy) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << accuracy * 100.0 << "%";
  return s.str();
}

void write_run_outputs(const fs::path& dir, const RunReport& report) {
  fs::create_directories(dir);
  write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_text(dir / "timing.json", timing_to_json(report).dump(2) + "\n");
  write_text(dir / "loss.csv", loss_curve_csv(report));
  write_text(dir / "accuracy.csv", accuracy_curve_csv(report));
}

ordered_json run_metadata(const Options& o, const Dataset& ds, const SplitConfig& split, std::uint64_t run_seed) {
  ordered_json m;
  m["dataset"] = ds.name;
  m["bands"] = ds.cube.bands;
  m["scale"] = to_string(ds.cube.scale_mode);
  m["split"] = split.to_string();
  m["seed"] = run_seed;
  m["max_epoch"] = o.epochs;
  m["batch_size"] = o.batch;
  m["l1_lambda"] = o.l1;
  return m;
}

int cmd_train(const Options& o, std::ostream& out) {
  const Dataset ds = load(o);
  const TrainConfig cfg = train_config(o);
  const SplitConfig split = SplitConfig::parse(o.split, o.seed);
  const NetworkSpec spec = resolve_spec(o, o.spatial, ds.cube.bands, ds.gt.nclass);
  const fs::path dir = prepare_out(o);

  std::vector<RunReport> reports;
  const auto seeds = run_seeds(cfg);
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    const RunSeeds rs = derive_run_seeds(seeds[r]);
    Prng split_rng(rs.split);
    const DatasetSplit ds_split = stratified_split(ds.gt, split, split_rng);
    if (r == 0) out << "train=" << ds_split.train.size() << " test=" << ds_split.test.size() << "\n";
    Prng init_rng(rs.init);
    Network net = Network::build(spec, init_rng);
    TrainConfig run_cfg = cfg;
    run_cfg.seed = rs.train;
    RunReport report = run(net, ds.cube, ds_split, run_cfg);
    const fs::path run_dir = dir / ("run" + std::to_string(r));
    write_run_outputs(run_dir, report);
    write_checkpoint((run_dir / "checkpoint.hvck").string(), save(net, run_metadata(o, ds, split, seeds[r])));
    out << "run " << r << ": accuracy " << percent(report.final_accuracy()) << " early "
        << percent(report.early.accuracy) << " at iteration " << report.early.iteration << " params "
        << report.param_count << "\n";
    reports.push_back(std::move(report));
  }
  const RunsSummary summary = summarize(std::move(reports), seeds);
  write_text(dir / "summary.json", summary_to_json(summary).dump(2) + "\n");
  out << "mean accuracy: " << percent(summary.mean_accuracy) << " (max deviation "
      << percent(summary.max_deviation) << (summary.deviation_flag ? ", above 0.2 points" : "") << ")\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, bool split_given) {
  if (o.checkpoint.empty()) throw InputError("--checkpoint is required");
  const Dataset ds = load(o);
  const Network net = hypervox::load(read_checkpoint(o.checkpoint));
  std::vector<LabeledPixel> pixels;
  if (split_given) {
    Prng split_rng(derive_run_seeds(o.seed).split);
    pixels = stratified_split(ds.gt, SplitConfig::parse(o.split, o.seed), split_rng).test;
  } else {
    pixels = labeled_pixels(ds.gt);
  }
  const EvalResult r = evaluate(net, ds.cube, pixels, o.eval_batch, o.threads);
  const fs::path dir = prepare_out(o);
  ordered_json j;
  j["pixels"] = pixels.size();
  j["accuracy"] = r.accuracy;
  ordered_json rows = ordered_json::array();
  for (int t = 0; t < r.confusion.nclass(); ++t) {
    ordered_json row = ordered_json::array();
    for (int p = 0; p < r.confusion.nclass(); ++p) row.push_back(r.confusion.at(t, p));
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  write_text(dir / "eval.json", j.dump(2) + "\n");
  out << "pixels=" << pixels.size() << " accuracy: " << percent(r.accuracy) << "\n";
  return kExitOk;
}

int cmd_classify(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw InputError("--checkpoint is required");
  if (o.cube.empty()) throw InputError("--cube is required");
  HyperCube cube = scale(read_cube(o.cube), parse_scale_mode(o.scale));
  const Network net = hypervox::load(read_checkpoint(o.checkpoint));
  GroundTruth names;
  if (!o.gt.empty()) {
    names = read_ground_truth(o.gt);
    check_compatible(cube, names);
  } else {
    names.nclass = net.nclass();
  }
  const LabelImage map = classify_map(net, cube, o.threads);
  const fs::path dir = prepare_out(o);
  write_text(dir / "map.pgm", to_pgm(map));
  write_text(dir / "legend.json", legend_json(names).dump(2) + "\n");
  out << "map " << map.width << "x" << map.height << " written to " << (dir / "map.pgm").string() << "\n";
  return kExitOk;
}

int cmd_trace(const Options& o, std::ostream& out) {
  const NetworkSpec spec = resolve_spec(o, o.spatial, o.bands, o.classes);
  const ShapeTrace trace = shape_trace(spec);
  out << "family " << to_string(spec.family) << "  input [1," << spec.f << "," << spec.n << "," << spec.n
      << "]  nclass " << spec.nclass << "\n";
  out << std::left << std::setw(4) << "#" << std::setw(10) << "kind" << std::setw(8) << "filters" << std::setw(9)
      << "kernel" << std::setw(9) << "stride" << std::setw(9) << "pad" << std::setw(18) << "output"
      << "params\n";
  for (const auto& lt : trace.layers) {
    const LayerSpec& l = spec.layers[lt.index];
    const bool conv = l.is_conv();
    out << std::setw(4) << lt.index << std::setw(10) << (l.kind == LayerKind::ConvPool ? "convpool" : conv ? (l.is_3d() ? "conv3d" : "conv1d") : "fc")
        << std::setw(8) << l.filters << std::setw(9) << (conv ? to_string(l.kernel) : "-") << std::setw(9)
        << (conv ? to_string(l.stride) : "-") << std::setw(9) << (conv ? to_string(l.pad) : "-") << std::setw(18)
        << shape_to_string(lt.output) << lt.params << "\n";
  }
  out << std::right;
  for (const auto& w : trace.warnings) out << "warning: " << w << "\n";
  if (spec.family != Family::Custom) {
    for (const auto& ref : reference_counts(spec.family)) {
      const auto ours = param_count(registry(spec.family, ref.n, ref.f, ref.nclass));
      const auto delta = static_cast<long long>(ours) - static_cast<long long>(ref.published);
      out << "reference " << ref.label << " (n=" << ref.n << " f=" << ref.f << " nclass=" << ref.nclass
          << "): published " << ref.published << ", registry " << ours << ", delta " << (delta >= 0 ? "+" : "")
          << delta << "\n";
    }
  }
  out << "params: " << param_count(spec) << "\n";
  return kExitOk;
}

int cmd_transfer(const Options& o, std::ostream& out) {
  if (o.init_from.empty()) throw InputError("--init-from <checkpoint> is required");
  const Dataset ds = load(o);
  TrainConfig cfg = train_config(o);
  const SplitConfig split = SplitConfig::parse(o.split, o.seed);
  const Checkpoint ck = read_checkpoint(o.init_from);
  FineTuneResult result = fine_tune(ck, ds, split, cfg, o.freeze_features);
  const fs::path dir = prepare_out(o);
  write_run_outputs(dir, result.report);
  ordered_json meta = run_metadata(o, ds, split, o.seed);
  meta["init_from"] = fs::path(o.init_from).filename().string();
  meta["freeze_features"] = o.freeze_features;
  write_checkpoint((dir / "checkpoint.hvck").string(), save(result.net, meta));
  out << "train=" << result.split.train.size() << " test=" << result.split.test.size() << "\n";
  out << "fine-tuned accuracy: " << percent(result.report.final_accuracy()) << " trainable params "
      << result.report.trainable_param_count << " of " << result.report.param_count << "\n";
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  if (o.fractions.empty()) throw InputError("--fractions needs at least one value");
  const Dataset ds = load(o);
  const TrainConfig cfg = train_config(o);
  const NetworkSpec spec = resolve_spec(o, o.spatial, ds.cube.bands, ds.gt.nclass);
  const fs::path dir = prepare_out(o);
  std::string csv = "fraction,mean_accuracy,max_deviation\n";
  for (double fraction : o.fractions) {
    std::ostringstream text;
    text << "frac:" << fraction;
    const SplitConfig split = SplitConfig::parse(text.str(), o.seed);
    const RunsSummary s = averaged_runs(spec, ds, split, cfg);
    std::ostringstream row;
    row << fraction << "," << std::setprecision(17) << s.mean_accuracy << "," << s.max_deviation << "\n";
    csv += row.str();
    out << "fraction " << fraction << ": mean accuracy " << percent(s.mean_accuracy) << "\n";
  }
  write_text(dir / "sweep.csv", csv);
  return kExitOk;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

int report_error(std::ostream& err, const char* kind, int code, const std::string& message) {
  err << "error: kind=" << kind << " code=" << code << " message=\"" << one_line(message) << "\"\n";
  return code;
}

void add_dataset(CLI::App* cmd, Options& o, bool gt_required = true) {
  cmd->add_option("--cube", o.cube, "Spectral cube (.hsc)")->required();
  auto* gt = cmd->add_option("--gt", o.gt, "Ground truth (.hsg)");
  if (gt_required) gt->required();
  cmd->add_option("--scale", o.scale, "raw or global-max")->capture_default_str();
}

void add_arch(CLI::App* cmd, Options& o) {
  cmd->add_option("--family", o.family, "Registry family a..e")->capture_default_str();
  cmd->add_option("--spatial", o.spatial, "Spatial neighbourhood n (odd)")->capture_default_str();
  cmd->add_option("--spec-file", o.spec_file, "Custom architecture file (overrides --family)");
}

void add_training(CLI::App* cmd, Options& o) {
  cmd->add_option("--split", o.split, "count:K or frac:P per class")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Base seed")->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "MaxEpoch")->capture_default_str();
  cmd->add_option("--batch", o.batch, "Training batch size S")->capture_default_str();
  cmd->add_option("--eval-batch", o.eval_batch, "Evaluation batch size T")->capture_default_str();
  cmd->add_option("--l1", o.l1, "L1 weight penalty")->capture_default_str();
  cmd->add_option("--runs", o.runs, "Independent runs to average")->capture_default_str();
  cmd->add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--threads", o.threads, "Evaluation threads (0 = all cores)")->capture_default_str();
}

void add_out(CLI::App* cmd, Options& o) {
  cmd->add_option("--out", o.out_dir, "Output directory (default $HYPERVOX_OUT or ./hypervox-out)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"hypervox: 3D convolutional pixel classification of hyperspectral images"};
  app.set_config("--config", "", "TOML-style file mirroring the command-line flags");
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train and evaluate a network, averaged over runs");
  add_dataset(train, o);
  add_arch(train, o);
  add_training(train, o);
  add_out(train, o);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled cube");
  add_dataset(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  auto* eval_split = eval->add_option("--split", o.split, "Evaluate the test part of this split only");
  eval->add_option("--seed", o.seed, "Seed of the split")->capture_default_str();
  eval->add_option("--eval-batch", o.eval_batch)->capture_default_str();
  eval->add_option("--threads", o.threads)->capture_default_str();
  add_out(eval, o);

  auto* transfer = app.add_subcommand("transfer", "Fine-tune a checkpoint's classifier head on a new dataset");
  add_dataset(transfer, o);
  add_training(transfer, o);
  transfer->add_option("--init-from", o.init_from, "Pre-trained checkpoint")->required();
  transfer->add_flag("--freeze-features", o.freeze_features, "Keep convolution weights constant");
  add_out(transfer, o);

  auto* trace = app.add_subcommand("trace", "Print the per-layer shape trace and parameter count");
  add_arch(trace, o);
  trace->add_option("--bands", o.bands, "Input bands f")->capture_default_str();
  trace->add_option("--classes", o.classes, "Number of classes")->capture_default_str();

  auto* classify = app.add_subcommand("classify", "Predict every pixel and write a PGM label map");
  add_dataset(classify, o, false);
  classify->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  classify->add_option("--threads", o.threads)->capture_default_str();
  add_out(classify, o);

  auto* sweep = app.add_subcommand("sweep", "Accuracy versus training fraction");
  add_dataset(sweep, o);
  add_arch(sweep, o);
  add_training(sweep, o);
  sweep->add_option("--fractions", o.fractions, "Training fractions, e.g. 0.05,0.06")->delimiter(',')->required();
  add_out(sweep, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "input", kExitInput, e.what());
  }

  // transfer trains a fresh head; its schedule is short unless asked.
  if (transfer->parsed() && transfer->count("--epochs") == 0) o.epochs = 10;

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out, eval_split->count() > 0);
    if (transfer->parsed()) return cmd_transfer(o, out);
    if (trace->parsed()) return cmd_trace(o, out);
    if (classify->parsed()) return cmd_classify(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
  } catch (const ArchitectureError& e) {
    return report_error(err, "architecture", kExitArchitecture, e.what());
  } catch (const GeometryError& e) {
    return report_error(err, "architecture", kExitArchitecture, e.what());
  } catch (const InputError& e) {
    return report_error(err, "input", kExitInput, e.what());
  } catch (const CheckpointError& e) {
    return report_error(err, "input", kExitInput, e.what());
  } catch (const ShapeError& e) {
    return report_error(err, "input", kExitInput, e.what());
  } catch (const std::exception& e) {
    return report_error(err, "internal", kExitInternal, e.what());
  }
  return kExitInternal;
}

}  // namespace hypervox
