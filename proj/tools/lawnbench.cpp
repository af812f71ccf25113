// lawnbench: synthesize scenes, augment, preprocess, train the four lawn-area
// pipelines, evaluate them, grid-search hyperparameters, and emit the
// comparison report. Every subcommand is deterministic given its flags.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "lawn/checkpoint.hpp"
#include "lawn/dataset.hpp"
#include "lawn/metrics.hpp"
#include "lawn/model.hpp"
#include "lawn/parallel.hpp"
#include "lawn/train.hpp"
#include "lawn/tuning.hpp"

namespace {

namespace fs = std::filesystem;
using lawn::data::Manifest;
using lawn::data::ManifestRecord;

constexpr int kExitOk = 0;
constexpr int kExitDiverged = 1;
constexpr int kExitUsage = 2;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for write");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// Paths inside a manifest are relative to the manifest file's directory.
fs::path manifest_root(const fs::path& manifest_path) {
  fs::path parent = manifest_path.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

std::string rebase_relative(const fs::path& image_path, const fs::path& from_root,
                            const fs::path& to_root) {
  fs::path abs = (from_root / image_path).lexically_normal();
  fs::path rel = abs.lexically_proximate(to_root.lexically_normal());
  return rel.generic_string();
}

std::string fmt_history(const lawn::training::TrainHistory& history) {
  std::string out = "epoch,train_mse,val_mse\n";
  char buf[128];
  for (const auto& row : history) {
    auto num = [&](double v) {
      auto res = std::to_chars(buf, buf + sizeof(buf), v);
      return std::string(buf, res.ptr);
    };
    out += std::to_string(row.epoch) + "," + num(row.train_mse) + "," + num(row.val_mse) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand option blocks
// ---------------------------------------------------------------------------

struct SynthOpts {
  int count = 65;
  std::string out_dir;
  uint64_t seed = 0;
  int size = 128;
  double mpp = 0.25;
  double house_lo = 0.05, house_hi = 0.35;
  int trees_lo = 2, trees_hi = 8;
};

int run_synth(const SynthOpts& o) {
  lawn::data::SceneConfig cfg;
  cfg.size = o.size;
  cfg.meters_per_pixel = o.mpp;
  cfg.house_fraction_lo = o.house_lo;
  cfg.house_fraction_hi = o.house_hi;
  cfg.tree_count_lo = o.trees_lo;
  cfg.tree_count_hi = o.trees_hi;
  cfg.seed = o.seed;
  cfg.validate();

  fs::create_directories(o.out_dir);
  Manifest manifest;
  for (int i = 0; i < o.count; ++i) {
    lawn::data::SyntheticScene scene = lawn::data::generate_synthetic_scene(cfg, i);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d.ppm", i);
    lawn::imaging::write_pnm(scene.image, fs::path(o.out_dir) / name);
    char origin[32];
    std::snprintf(origin, sizeof(origin), "scene_%04d", i);
    manifest.push_back({name, scene.area_sq_m, origin});
  }
  lawn::data::save_manifest(manifest, fs::path(o.out_dir) / "manifest.csv");
  std::cout << "wrote " << manifest.size() << " scenes to " << o.out_dir << "\n";
  return kExitOk;
}

struct AugmentOpts {
  std::string data;
  std::string out_dir;
  uint64_t seed = 0;
  lawn::data::AugmentParams params;
};

int run_augment(const AugmentOpts& o) {
  Manifest in = lawn::data::load_manifest(o.data);
  Manifest out = lawn::data::generate_augmented_dataset(in, o.params, o.seed,
                                                        manifest_root(o.data), o.out_dir);
  lawn::data::save_manifest(out, fs::path(o.out_dir) / "manifest.csv");
  std::cout << "wrote " << out.size() << " images to " << o.out_dir << "\n";
  return kExitOk;
}

struct PreprocessOpts {
  std::string data;
  std::string out_dir;
  std::string method = "threshold";
  lawn::imaging::PreprocessParams params;
  int fixed_threshold = -1;
};

int run_preprocess(const PreprocessOpts& o) {
  lawn::imaging::PreprocessMethod method = lawn::imaging::parse_preprocess_method(o.method);
  lawn::imaging::PreprocessParams params = o.params;
  if (o.fixed_threshold >= 0) params.fixed_threshold = o.fixed_threshold;
  Manifest in = lawn::data::load_manifest(o.data);
  fs::create_directories(o.out_dir);
  fs::path in_root = manifest_root(o.data);
  Manifest out;
  for (const ManifestRecord& rec : in) {
    lawn::imaging::Image img = lawn::data::load_input_image(in_root, rec, method, params);
    std::string name = fs::path(rec.image_path).stem().string() +
                       (img.channels == 1 ? ".pgm" : ".ppm");
    lawn::imaging::write_pnm(img, fs::path(o.out_dir) / name);
    out.push_back({name, rec.area_sq_m, rec.origin_id});
  }
  lawn::data::save_manifest(out, fs::path(o.out_dir) / "manifest.csv");
  std::cout << "wrote " << out.size() << " preprocessed images to " << o.out_dir << "\n";
  return kExitOk;
}

struct SplitOpts {
  std::string data;
  std::string out_dir;
  uint64_t seed = 0;
  std::vector<double> ratios = {0.7, 0.15, 0.15};
  std::vector<size_t> counts;
  bool paper_split = false;  // record-level allocation
};

int run_split(const SplitOpts& o) {
  Manifest in = lawn::data::load_manifest(o.data);
  lawn::data::SplitSpec spec;
  if (o.ratios.size() != 3) throw std::invalid_argument("--ratios needs 3 values");
  spec.ratios = {o.ratios[0], o.ratios[1], o.ratios[2]};
  spec.by_original = !o.paper_split;
  spec.seed = o.seed;
  if (!o.counts.empty()) {
    if (o.counts.size() != 3) throw std::invalid_argument("--counts needs 3 values");
    spec.explicit_counts = {o.counts[0], o.counts[1], o.counts[2]};
  }
  lawn::data::SplitResult split = lawn::data::split_dataset(in, spec);

  fs::create_directories(o.out_dir);
  fs::path in_root = manifest_root(o.data);
  fs::path out_root = fs::path(o.out_dir);
  auto rebase = [&](Manifest m) {
    for (ManifestRecord& rec : m)
      rec.image_path = rebase_relative(rec.image_path, in_root, out_root);
    return m;
  };
  lawn::data::save_manifest(rebase(split.train), out_root / "train.csv");
  lawn::data::save_manifest(rebase(split.val), out_root / "val.csv");
  lawn::data::save_manifest(rebase(split.test), out_root / "test.csv");
  std::cout << "split " << in.size() << " records into " << split.train.size() << "/"
            << split.val.size() << "/" << split.test.size() << "\n";
  return kExitOk;
}

struct TrainOpts {
  std::string pipeline = "cnn";
  std::string data;
  std::string val;
  std::string out = "checkpoint.bin";
  std::string history;
  lawn::training::TrainConfig cfg;
  int patience = 15;  // 0 disables
  std::string optimizer = "adam";
  int base_filters = 32;
  double dropout = 0.3;
  double l2 = 1e-4;
  lawn::imaging::PreprocessParams pp;
  int fixed_threshold = -1;
};

int run_train(const TrainOpts& o) {
  lawn::metrics::Pipeline pipeline = lawn::metrics::parse_pipeline(o.pipeline);
  lawn::training::TrainConfig cfg = o.cfg;
  cfg.optimizer = lawn::training::parse_optimizer(o.optimizer);
  cfg.early_stop_patience = o.patience > 0 ? std::optional<int>(o.patience) : std::nullopt;

  Manifest train_m = lawn::data::load_manifest(o.data);
  Manifest val_m = lawn::data::load_manifest(o.val);
  if (train_m.empty() || val_m.empty())
    throw std::invalid_argument("train: manifests must be nonempty");

  lawn::training::DataSource source;
  source.root = manifest_root(o.data);
  source.method = lawn::metrics::preprocess_method(pipeline);
  source.preprocess = o.pp;
  if (o.fixed_threshold >= 0) source.preprocess.fixed_threshold = o.fixed_threshold;

  // Model geometry comes from the first training image after preprocessing.
  lawn::imaging::Image probe =
      lawn::data::load_input_image(source.root, train_m.front(), source.method,
                                   source.preprocess);
  lawn::nn::ModelSpec spec = lawn::nn::default_model_spec(
      probe.height, probe.width, probe.channels, o.base_filters, o.dropout, o.l2);

  lawn::training::DataSource val_source = source;
  val_source.root = manifest_root(o.val);
  // Manifests usually share one root; when they do not, the loader below
  // resolves each manifest against its own directory.
  lawn::training::TrainResult result;
  if (val_source.root == source.root) {
    result = lawn::training::train(spec, train_m, val_m, cfg, source);
  } else {
    Manifest val_rebased = val_m;
    for (ManifestRecord& rec : val_rebased)
      rec.image_path = rebase_relative(rec.image_path, val_source.root, source.root);
    result = lawn::training::train(spec, train_m, val_rebased, cfg, source);
  }

  lawn::training::Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.params = std::move(result.params);
  ckpt.opt = std::move(result.opt);
  ckpt.config = cfg;
  ckpt.pipeline = o.pipeline;
  ckpt.preprocess = source.preprocess;
  ckpt.target_mean = result.target_mean;
  ckpt.target_std = result.target_std;
  ckpt.standardized = result.standardized;
  lawn::training::save_checkpoint(ckpt, o.out);

  if (!o.history.empty()) write_file(o.history, fmt_history(result.history));
  for (const auto& row : result.history)
    std::fprintf(stderr, "[epoch %d] train_mse=%.3f val_mse=%.3f (%.1fs)\n", row.epoch,
                 row.train_mse, row.val_mse, row.wall_seconds);
  std::cout << "saved checkpoint to " << o.out << " (" << result.history.size()
            << " epochs)\n";
  return kExitOk;
}

struct EvalOpts {
  std::string checkpoint;
  std::string data;
  std::string split = "testing";
  std::string pipeline;  // defaults to the checkpoint's pipeline
  std::string out;
};

int run_eval(const EvalOpts& o) {
  lawn::training::Checkpoint ckpt = lawn::training::load_checkpoint(o.checkpoint);
  lawn::metrics::Pipeline pipeline =
      lawn::metrics::parse_pipeline(o.pipeline.empty() ? ckpt.pipeline : o.pipeline);
  lawn::metrics::Split split = lawn::metrics::parse_split(o.split);
  Manifest manifest = lawn::data::load_manifest(o.data);
  lawn::metrics::EvalResult r = lawn::metrics::evaluate_pipeline(
      ckpt, manifest, pipeline, split, manifest_root(o.data));
  std::string csv = lawn::metrics::eval_results_to_csv({r});
  if (!o.out.empty()) write_file(o.out, csv);
  std::cout << csv;
  return kExitOk;
}

struct ReportOpts {
  std::vector<std::string> results;
  std::string out_csv;
  std::string out_md;
};

int run_report(const ReportOpts& o) {
  std::vector<lawn::metrics::EvalResult> rows;
  for (const std::string& file : o.results) {
    auto part = lawn::metrics::eval_results_from_csv(read_file(file));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  lawn::metrics::Report report = lawn::metrics::build_report(std::move(rows));
  if (!o.out_csv.empty()) write_file(o.out_csv, report.csv);
  if (!o.out_md.empty()) write_file(o.out_md, report.markdown);
  std::cout << report.markdown;
  return kExitOk;
}

struct GridOpts {
  std::string grid_file;
  std::string data;
  std::string pipeline = "cnn";
  std::string out;
  size_t k = 5;
  uint64_t seed = 0;
  int epochs = 20;
  int batch = 16;
  bool record_level = false;
};

int run_gridsearch(const GridOpts& o) {
  lawn::tuning::ParamGrid grid = lawn::tuning::parse_param_grid(read_file(o.grid_file));
  Manifest manifest = lawn::data::load_manifest(o.data);
  if (manifest.empty()) throw std::invalid_argument("gridsearch: empty manifest");

  lawn::metrics::Pipeline pipeline = lawn::metrics::parse_pipeline(o.pipeline);
  lawn::tuning::GridSearchOptions opts;
  opts.k = o.k;
  opts.seed = o.seed;
  opts.budget_epochs = o.epochs;
  opts.by_origin = !o.record_level;
  opts.base_config.batch_size = o.batch;
  opts.base_config.seed = o.seed;
  opts.source.root = manifest_root(o.data);
  opts.source.method = lawn::metrics::preprocess_method(pipeline);
  lawn::imaging::Image probe = lawn::data::load_input_image(
      opts.source.root, manifest.front(), opts.source.method, opts.source.preprocess);
  opts.in_h = probe.height;
  opts.in_w = probe.width;
  opts.in_c = probe.channels;

  lawn::tuning::GridSearchResult result = lawn::tuning::grid_search(grid, manifest, opts);
  std::string csv = lawn::tuning::grid_results_to_csv(result.results);
  if (!o.out.empty()) write_file(o.out, csv);
  std::cout << "best point " << result.best.index << ": lr=" << result.best.learning_rate
            << " dropout=" << result.best.dropout_rate << " l2=" << result.best.l2_lambda
            << " filters=" << result.best.base_filters << "\n";
  return kExitOk;
}

struct ActivationsOpts {
  std::string checkpoint;
  std::string image;
  std::string out_dir = "activations";
};

int run_activations(const ActivationsOpts& o) {
  lawn::training::Checkpoint ckpt = lawn::training::load_checkpoint(o.checkpoint);
  lawn::imaging::Image img = lawn::imaging::read_pnm(o.image);
  if (img.channels != ckpt.spec.in_c)
    throw std::invalid_argument("activations: image has " + std::to_string(img.channels) +
                                " channels but the checkpoint expects " +
                                std::to_string(ckpt.spec.in_c));
  if (img.height != ckpt.spec.in_h || img.width != ckpt.spec.in_w)
    throw std::invalid_argument("activations: image geometry does not match the checkpoint");
  lawn::nn::Tensor x({1, ckpt.spec.in_h, ckpt.spec.in_w, ckpt.spec.in_c});
  for (size_t i = 0; i < img.data.size(); ++i) x.data()[i] = img.data[i] * (1.0f / 255.0f);
  auto files = lawn::nn::dump_conv_activations(ckpt.spec, ckpt.params, x, o.out_dir);
  for (const auto& f : files) std::cout << f.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lawn-area estimation benchmark"};
  app.require_subcommand(1);
  int threads = lawn::max_threads();
  app.add_option("--threads", threads, "worker threads (never changes output bytes)")
      ->capture_default_str();
  app.set_config("--config", "", "key=value config file; flags override it");
  if (const char* env = std::getenv("LAWNBENCH_CONFIG"))
    if (app.get_config_ptr() && *env) app.get_config_ptr()->default_str(env);

  SynthOpts synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic labeled scenes");
  synth_cmd->add_option("--count", synth.count, "number of scenes")->capture_default_str();
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "scene seed")->capture_default_str();
  synth_cmd->add_option("--size", synth.size, "square image size")->capture_default_str();
  synth_cmd->add_option("--mpp", synth.mpp, "meters per pixel")->capture_default_str();
  synth_cmd->add_option("--house-min", synth.house_lo, "min house fraction")->capture_default_str();
  synth_cmd->add_option("--house-max", synth.house_hi, "max house fraction")->capture_default_str();
  synth_cmd->add_option("--trees-min", synth.trees_lo, "min tree count")->capture_default_str();
  synth_cmd->add_option("--trees-max", synth.trees_hi, "max tree count")->capture_default_str();

  AugmentOpts aug;
  auto* aug_cmd = app.add_subcommand("augment", "write augmented copies of a dataset");
  aug_cmd->add_option("--data", aug.data, "input manifest CSV")->required();
  aug_cmd->add_option("--out", aug.out_dir, "output directory")->required();
  aug_cmd->add_option("--seed", aug.seed, "augmentation seed")->capture_default_str();
  aug_cmd->add_option("--copies", aug.params.copies, "augmented copies per image")
      ->capture_default_str();
  aug_cmd->add_option("--rotation", aug.params.rotation_max_deg, "max |rotation| degrees")
      ->capture_default_str();
  aug_cmd->add_flag("--flip-h,!--no-flip-h", aug.params.flip_horizontal, "enable horizontal flips")
      ->capture_default_str();
  aug_cmd->add_flag("--flip-v,!--no-flip-v", aug.params.flip_vertical, "enable vertical flips")
      ->capture_default_str();
  aug_cmd->add_option("--brightness-lo", aug.params.brightness_lo, "brightness factor low")
      ->capture_default_str();
  aug_cmd->add_option("--brightness-hi", aug.params.brightness_hi, "brightness factor high")
      ->capture_default_str();

  PreprocessOpts pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "apply a preprocessing operator to a dataset");
  pre_cmd->add_option("--data", pre.data, "input manifest CSV")->required();
  pre_cmd->add_option("--out", pre.out_dir, "output directory")->required();
  pre_cmd->add_option("--method", pre.method, "none|threshold|contour|canny")
      ->capture_default_str();
  pre_cmd->add_option("--blur-sigma", pre.params.contour_blur_sigma,
                      "Gaussian sigma for the contour pipeline")->capture_default_str();
  pre_cmd->add_option("--canny-sigma", pre.params.canny.sigma, "Canny Gaussian sigma")
      ->capture_default_str();
  pre_cmd->add_option("--canny-low", pre.params.canny.low, "Canny low threshold")
      ->capture_default_str();
  pre_cmd->add_option("--canny-high", pre.params.canny.high, "Canny high threshold")
      ->capture_default_str();
  pre_cmd->add_option("--fixed-threshold", pre.fixed_threshold,
                      "fixed binarization threshold (default: Otsu)");

  SplitOpts split;
  auto* split_cmd = app.add_subcommand("split", "split a manifest into train/val/test");
  split_cmd->add_option("--data", split.data, "input manifest CSV")->required();
  split_cmd->add_option("--out-dir", split.out_dir, "output directory")->required();
  split_cmd->add_option("--seed", split.seed, "shuffle seed")->capture_default_str();
  split_cmd->add_option("--ratios", split.ratios, "train,val,test fractions")
      ->delimiter(',')->expected(3);
  split_cmd->add_option("--counts", split.counts,
                        "exact train,val,test sizes (record-level mode)")
      ->delimiter(',')->expected(3);
  split_cmd->add_flag("--paper-split", split.paper_split,
                      "allocate records directly (augmented twins may leak across splits)");

  TrainOpts train;
  auto* train_cmd = app.add_subcommand("train", "train one pipeline");
  train_cmd->add_option("--pipeline", train.pipeline, "cnn|threshold|contour|edges")
      ->capture_default_str();
  train_cmd->add_option("--data", train.data, "training manifest CSV")->required();
  train_cmd->add_option("--val", train.val, "validation manifest CSV")->required();
  train_cmd->add_option("--out", train.out, "checkpoint output path")->capture_default_str();
  train_cmd->add_option("--history", train.history, "per-epoch MSE CSV output path");
  train_cmd->add_option("--epochs", train.cfg.epochs, "training epochs")->capture_default_str();
  train_cmd->add_option("--batch", train.cfg.batch_size, "batch size (>= 2)")
      ->capture_default_str();
  train_cmd->add_option("--lr", train.cfg.learning_rate, "learning rate")->capture_default_str();
  train_cmd->add_option("--optimizer", train.optimizer, "adam|sgd")->capture_default_str();
  train_cmd->add_option("--momentum", train.cfg.momentum, "sgd momentum")->capture_default_str();
  train_cmd->add_option("--seed", train.cfg.seed, "training seed")->capture_default_str();
  train_cmd->add_flag("--shuffle,!--no-shuffle", train.cfg.shuffle, "shuffle each epoch")
      ->capture_default_str();
  train_cmd->add_flag("--standardize", train.cfg.target_standardize,
                      "train on standardized targets");
  train_cmd->add_option("--patience", train.patience, "early-stop patience (0 disables)")
      ->capture_default_str();
  train_cmd->add_option("--base-filters", train.base_filters, "first conv width")
      ->capture_default_str();
  train_cmd->add_option("--dropout", train.dropout, "dense-block dropout rate")
      ->capture_default_str();
  train_cmd->add_option("--l2", train.l2, "L2 lambda on kernels")->capture_default_str();
  train_cmd->add_option("--blur-sigma", train.pp.contour_blur_sigma,
                        "Gaussian sigma for the contour pipeline")->capture_default_str();
  train_cmd->add_option("--canny-sigma", train.pp.canny.sigma, "Canny Gaussian sigma")
      ->capture_default_str();
  train_cmd->add_option("--canny-low", train.pp.canny.low, "Canny low threshold")
      ->capture_default_str();
  train_cmd->add_option("--canny-high", train.pp.canny.high, "Canny high threshold")
      ->capture_default_str();
  train_cmd->add_option("--fixed-threshold", train.fixed_threshold,
                        "fixed binarization threshold (default: Otsu)");

  EvalOpts eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval.data, "manifest CSV")->required();
  eval_cmd->add_option("--split", eval.split, "training|validation|testing")
      ->capture_default_str();
  eval_cmd->add_option("--pipeline", eval.pipeline, "override the checkpoint's pipeline tag");
  eval_cmd->add_option("--out", eval.out, "write the result row CSV here");

  ReportOpts report;
  auto* report_cmd = app.add_subcommand("report", "merge eval rows into the comparison table");
  report_cmd->add_option("--results", report.results, "eval CSV files")
      ->required()->expected(-1);
  report_cmd->add_option("--out-csv", report.out_csv, "combined CSV output path");
  report_cmd->add_option("--out-md", report.out_md, "markdown table output path");

  GridOpts grid;
  auto* grid_cmd = app.add_subcommand("gridsearch", "k-fold CV over a hyperparameter grid");
  grid_cmd->add_option("--grid", grid.grid_file, "grid config file (key=v1,v2)")->required();
  grid_cmd->add_option("--data", grid.data, "manifest CSV")->required();
  grid_cmd->add_option("--pipeline", grid.pipeline, "cnn|threshold|contour|edges")
      ->capture_default_str();
  grid_cmd->add_option("--k", grid.k, "fold count")->capture_default_str();
  grid_cmd->add_option("--seed", grid.seed, "CV seed")->capture_default_str();
  grid_cmd->add_option("--epochs", grid.epochs, "budget epochs per fold")->capture_default_str();
  grid_cmd->add_option("--batch", grid.batch, "batch size")->capture_default_str();
  grid_cmd->add_flag("--record-level", grid.record_level,
                     "fold over records instead of origin ids");
  grid_cmd->add_option("--out", grid.out, "results CSV output path");

  ActivationsOpts act;
  auto* act_cmd = app.add_subcommand("activations", "dump per-conv-layer activation grids");
  act_cmd->add_option("--checkpoint", act.checkpoint, "checkpoint path")->required();
  act_cmd->add_option("--image", act.image, "input image (P5/P6)")->required();
  act_cmd->add_option("--out", act.out_dir, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  lawn::set_max_threads(threads);
  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (aug_cmd->parsed()) return run_augment(aug);
    if (pre_cmd->parsed()) return run_preprocess(pre);
    if (split_cmd->parsed()) return run_split(split);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (report_cmd->parsed()) return run_report(report);
    if (grid_cmd->parsed()) return run_gridsearch(grid);
    if (act_cmd->parsed()) return run_activations(act);
  } catch (const lawn::training::DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
