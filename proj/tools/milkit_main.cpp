// milkit command-line front end: tile, train, eval, compare, explain, synth.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "milkit/bagfile.hpp"
#include "milkit/experiment.hpp"
#include "milkit/image.hpp"
#include "milkit/interpret.hpp"
#include "milkit/metrics.hpp"
#include "milkit/models.hpp"
#include "milkit/synth.hpp"
#include "milkit/tiling.hpp"
#include "milkit/training.hpp"

namespace fs = std::filesystem;
using namespace milkit;

namespace {

// Reproducibility log: the exact flag set, written once per command into the
// output location. No timestamps, so reruns stay byte-identical.
void write_run_log(const fs::path& out_dir, const std::string& command,
                   const std::vector<std::string>& args, const std::string& status) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream log(out_dir / (command + "_run.log"));
  log << "command: " << command << '\n';
  log << "args:";
  for (const auto& a : args) log << ' ' << a;
  log << '\n' << "status: " << status << '\n';
}

std::vector<std::string> capture_args(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return args;
}

struct TileOptions {
  std::string manifest;
  std::string out_dir;
  int tile_size = kDefaultTileSize;
  double retain_ratio = kDefaultRetainRatio;
  double pad_value = kDefaultPadValue;
  int feature_dim = kDefaultFeatureDim;
  std::uint64_t encoder_seed = 7777;
  std::string dump_dir;
};

int run_tile(const TileOptions& opt, const std::vector<std::string>& args) {
  const auto entries = read_manifest(opt.manifest);
  if (entries.empty()) throw std::runtime_error("manifest is empty: " + opt.manifest);
  fs::create_directories(opt.out_dir);
  if (!opt.dump_dir.empty()) fs::create_directories(opt.dump_dir);

  std::optional<Encoder> encoder;
  int failures = 0;
  for (const auto& entry : entries) {
    try {
      SlideImage image = read_image(entry.image_path);
      image.id = entry.id;
      image.label = entry.label;

      auto patches = tile_image(image, opt.tile_size, opt.pad_value);
      auto [kept, stats] = filter_background(patches, opt.retain_ratio);

      if (!encoder) {
        EncoderConfig cfg;
        cfg.feature_dim = opt.feature_dim;
        cfg.input_tile = opt.tile_size;
        cfg.in_channels = image.channels;
        Rng rng(opt.encoder_seed);
        encoder.emplace(cfg, rng);
      } else if (encoder->config().in_channels != image.channels) {
        throw std::runtime_error("mixed channel counts in manifest (slide '" + entry.id + "')");
      }

      Tensor tiles({static_cast<int>(kept.size()), image.channels, opt.tile_size, opt.tile_size});
      Bag bag;
      bag.slide_id = entry.id;
      bag.label = entry.label;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        Tensor norm = normalize_patch(kept[i]);
        std::copy(norm.data(), norm.data() + norm.size(), tiles.data() + i * norm.size());
        bag.coords.emplace_back(kept[i].grid_row, kept[i].grid_col);
        if (!opt.dump_dir.empty()) {
          SlideImage tile_img;
          tile_img.id = entry.id;
          tile_img.width = opt.tile_size;
          tile_img.height = opt.tile_size;
          tile_img.channels = image.channels;
          tile_img.pixels = kept[i].pixels;
          char name[512];
          std::snprintf(name, sizeof(name), "%s_%d_%d.%s", entry.id.c_str(), kept[i].grid_row,
                        kept[i].grid_col, image.channels == 1 ? "pgm" : "ppm");
          write_image(tile_img, fs::path(opt.dump_dir) / name);
        }
      }
      bag.features = encoder->encode(tiles);
      write_bag_file(bag, fs::path(opt.out_dir) / (entry.id + ".bag"));
      std::printf("slide %s: kept %zu / %zu patches (c_max=%.2f threshold=%.2f)\n",
                  entry.id.c_str(), kept.size(), patches.size(), stats.c_max, stats.threshold);
    } catch (const std::exception& e) {
      ++failures;
      std::fprintf(stderr, "slide %s: FAILED: %s\n", entry.id.c_str(), e.what());
    }
  }
  write_run_log(opt.out_dir, "tile", args, failures == 0 ? "ok" : "partial_failure");
  return failures == 0 ? 0 : 2;
}

struct SplitFlags {
  double test_fraction = 0.15;
  double val_fraction = 0.20;
  std::uint64_t split_seed = 0;

  SplitSpec spec() const { return SplitSpec{test_fraction, val_fraction, split_seed}; }
};

void add_split_flags(CLI::App* cmd, SplitFlags& flags) {
  cmd->add_option("--test-fraction", flags.test_fraction, "Test fraction of all bags");
  cmd->add_option("--val-fraction", flags.val_fraction, "Validation fraction of the non-test bags");
  cmd->add_option("--split-seed", flags.split_seed, "Seed for the dataset split shuffle");
}

struct TrainOptions {
  std::string bags_dir;
  std::string out_ckpt;
  std::string history_path;
  TrainConfig config;
  std::string variant = "attention";
  SplitFlags split;
};

int run_train(TrainOptions& opt, const std::vector<std::string>& args) {
  opt.config.variant = parse_variant(opt.variant);
  auto bags = read_bag_dir(opt.bags_dir);
  IndexSplit idx = split_indices(bags.size(), opt.split.spec());
  std::vector<Bag> train_bags, val_bags;
  for (std::size_t i : idx.train) train_bags.push_back(bags[i]);
  for (std::size_t i : idx.val) val_bags.push_back(bags[i]);

  RunHistory history = train(train_bags, val_bags, opt.config);

  Rng rebuild_rng(opt.config.seed);
  auto model = make_classifier(opt.config, train_bags.front().feature_dim(), rebuild_rng);
  load_params(*model, history.best_params);
  write_checkpoint(make_checkpoint(*model, opt.config, history.best_params), opt.out_ckpt);
  if (!opt.history_path.empty()) write_history_csv(history, opt.history_path);

  std::printf("trained %s: %d epochs, best epoch %d (val AUC %.4f), checkpoint %s\n",
              variant_name(opt.config.variant).c_str(), opt.config.epochs, history.best_epoch,
              history.best_epoch >= 0 ? history.val_auc[history.best_epoch] : 0.5,
              opt.out_ckpt.c_str());
  write_run_log(fs::path(opt.out_ckpt).parent_path(), "train", args, "ok");
  return 0;
}

struct EvalOptions {
  std::string bags_dir;
  std::string checkpoint;
  std::string out_path;
  double threshold = kDefaultThreshold;
  std::string subset = "test";
  SplitFlags split;
};

int run_eval(const EvalOptions& opt, const std::vector<std::string>& args) {
  auto bags = read_bag_dir(opt.bags_dir);
  std::vector<Bag> subset;
  if (opt.subset == "all") {
    subset = bags;
  } else if (opt.subset == "test") {
    IndexSplit idx = split_indices(bags.size(), opt.split.spec());
    for (std::size_t i : idx.test) subset.push_back(bags[i]);
  } else {
    throw CLI::ValidationError("--subset must be 'test' or 'all'");
  }

  auto model = classifier_from_checkpoint(read_checkpoint(opt.checkpoint));
  auto scores = score_bags(*model, subset);
  MetricsReport report = confusion_metrics(scores, opt.threshold);

  nlohmann::ordered_json j;
  j["n_examples"] = subset.size();
  j["subset"] = opt.subset;
  j["threshold"] = report.threshold;
  j["accuracy"] = report.accuracy;
  j["f1"] = report.f1;
  j["auc"] = report.auc;
  j["sensitivity"] = report.sensitivity;
  j["specificity"] = report.specificity;
  if (!report.flags.empty()) j["flags"] = report.flags;
  const std::string text = j.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!opt.out_path.empty()) {
    std::ofstream out(opt.out_path);
    out << text;
    write_run_log(fs::path(opt.out_path).parent_path(), "eval", args, "ok");
  }
  return 0;
}

struct CompareOptionsCli {
  std::string bags_dir;
  std::string out_path;
  int runs = 20;
  TrainConfig config;
  SplitFlags split;
  double threshold = kDefaultThreshold;
  bool skip_baseline = false;
};

int run_compare(const CompareOptionsCli& opt, const std::vector<std::string>& args) {
  auto bags = read_bag_dir(opt.bags_dir);
  CompareOptions options;
  options.runs = opt.runs;
  options.train = opt.config;
  options.split = opt.split.spec();
  options.threshold = opt.threshold;
  if (opt.skip_baseline) {
    options.variants = {Variant::attention, Variant::max_pool, Variant::mean_pool};
  }

  CompareReport report = compare_methods(bags, options);
  const std::string table = format_compare_table(report);
  std::fputs(table.c_str(), stdout);
  if (!opt.out_path.empty()) {
    std::ofstream out(opt.out_path);
    out << compare_report_json(report);
    write_run_log(fs::path(opt.out_path).parent_path(), "compare", args, "ok");
  }
  return 0;
}

struct ExplainOptions {
  std::string bags_dir;
  std::string checkpoint;
  std::string out_dir;
  std::string mode = "attention";
  int ig_steps = kDefaultIgSteps;
  std::string ig_baseline = "white";
  int limit = 0;  // 0 = all bags
};

int run_explain(const ExplainOptions& opt, const std::vector<std::string>& args) {
  auto bags = read_bag_dir(opt.bags_dir);
  if (opt.limit > 0 && bags.size() > static_cast<std::size_t>(opt.limit)) {
    bags.resize(static_cast<std::size_t>(opt.limit));
  }
  Checkpoint ck = read_checkpoint(opt.checkpoint);
  fs::create_directories(opt.out_dir);

  if (opt.mode == "attention") {
    if (ck.variant != Variant::attention) {
      throw std::runtime_error("attention mode needs an attention checkpoint, got variant '" +
                               variant_name(ck.variant) + "'");
    }
    AttentionParams params;
    params.V = ck.tensors.at(0);
    params.w = ck.tensors.at(1);
    params.v = ck.tensors.at(2);
    for (const auto& bag : bags) {
      auto weights = attention_weights(bag, params);
      AttributionMap map = attention_heatmap(bag, weights);
      write_map_pgm(map, fs::path(opt.out_dir) / (bag.slide_id + "_attention.pgm"));
      write_map_json(map, fs::path(opt.out_dir) / (bag.slide_id + "_attention.json"));
      write_attention_record(bag, weights,
                             fs::path(opt.out_dir) / (bag.slide_id + "_weights.json"));
    }
  } else if (opt.mode == "ig") {
    if (ck.variant != Variant::baseline) {
      throw std::runtime_error("ig mode needs a baseline checkpoint, got variant '" +
                               variant_name(ck.variant) + "'");
    }
    BaselineConfig net_cfg;
    net_cfg.input_size = ck.raster_size;
    net_cfg.in_channels = 1;
    net_cfg.channels = ck.baseline_channels;
    Rng rebuild_rng(0);
    BaselineNet net(net_cfg, rebuild_rng);
    load_param_tensors(net.params(), ck.tensors);
    const double fill = opt.ig_baseline == "black" ? 0.0 : 255.0;
    for (const auto& bag : bags) {
      Tensor input = render_bag_raster(bag, ck.raster_size);
      Tensor reference = Tensor::full(input.shape(), fill);
      ScalarFn f = [&](const ad::Var& x) { return net.forward(x); };
      AttributionMap map =
          integrated_gradients(f, bag.slide_id, input, reference, opt.ig_steps);
      write_map_pgm(map, fs::path(opt.out_dir) / (bag.slide_id + "_ig.pgm"));
      write_map_json(map, fs::path(opt.out_dir) / (bag.slide_id + "_ig.json"));
    }
  } else {
    throw CLI::ValidationError("--mode must be 'attention' or 'ig'");
  }
  write_run_log(opt.out_dir, "explain", args, "ok");
  return 0;
}

struct SynthOptions {
  std::string out_dir;
  SynthSpec spec;
};

int run_synth(const SynthOptions& opt, const std::vector<std::string>& args) {
  auto data = generate_bags(opt.spec);
  fs::create_directories(opt.out_dir);
  nlohmann::ordered_json masks;
  for (std::size_t i = 0; i < data.bags.size(); ++i) {
    write_bag_file(data.bags[i], fs::path(opt.out_dir) / (data.bags[i].slide_id + ".bag"));
    masks[data.bags[i].slide_id] = data.signal_masks[i];
  }
  std::ofstream mask_out(fs::path(opt.out_dir) / "masks.json");
  mask_out << masks.dump(2) << '\n';
  std::printf("wrote %zu bags (K=%d, M=%d, signal_fraction=%.3f) to %s\n", data.bags.size(),
              opt.spec.instances_per_bag, opt.spec.feature_dim, opt.spec.signal_fraction,
              opt.out_dir.c_str());
  write_run_log(opt.out_dir, "synth", args, "ok");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"milkit: attention-based multiple instance learning on bagged slide patches"};
  app.require_subcommand(1);
  const auto args = capture_args(argc, argv);

  TileOptions tile_opt;
  auto* tile = app.add_subcommand("tile", "Tile slides, filter background, encode patch bags");
  tile->add_option("--manifest", tile_opt.manifest, "CSV manifest: id,image_path,label")
      ->required();
  tile->add_option("--out", tile_opt.out_dir, "Output directory for .bag files")->required();
  tile->add_option("--tile-size", tile_opt.tile_size, "Patch edge length (default 224)");
  tile->add_option("--retain-ratio", tile_opt.retain_ratio,
                   "Keep patches with c_p <= ratio * c_max (default 0.95)");
  tile->add_option("--pad-value", tile_opt.pad_value, "Padding intensity (default 255)");
  tile->add_option("--feature-dim", tile_opt.feature_dim, "Encoder feature dimension M");
  tile->add_option("--encoder-seed", tile_opt.encoder_seed, "Seed for the frozen patch encoder");
  tile->add_option("--dump-dir", tile_opt.dump_dir, "Optional directory for kept patch images");

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "Train one model variant on a bag directory");
  train_cmd->add_option("--bags", train_opt.bags_dir, "Directory of .bag files")->required();
  train_cmd->add_option("--out", train_opt.out_ckpt, "Checkpoint output path")->required();
  train_cmd->add_option("--variant", train_opt.variant, "attention|mean|max|baseline");
  train_cmd->add_option("--lr", train_opt.config.learning_rate, "Learning rate");
  train_cmd->add_option("--momentum", train_opt.config.momentum, "SGD momentum");
  train_cmd->add_option("--epochs", train_opt.config.epochs, "Training epochs");
  train_cmd->add_option("--weight-decay", train_opt.config.weight_decay, "L2 penalty");
  train_cmd->add_option("--seed", train_opt.config.seed, "Run seed");
  train_cmd->add_option("--attention-dim", train_opt.config.attention_dim, "Attention width L");
  train_cmd->add_option("--baseline-raster", train_opt.config.baseline_raster,
                        "Bag raster side for the baseline variant");
  train_cmd->add_option("--history", train_opt.history_path, "Optional per-epoch CSV");
  add_split_flags(train_cmd, train_opt.split);

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on bags");
  eval_cmd->add_option("--bags", eval_opt.bags_dir, "Directory of .bag files")->required();
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--threshold", eval_opt.threshold, "Decision threshold (default 0.5)");
  eval_cmd->add_option("--subset", eval_opt.subset, "test (split holdout) or all");
  eval_cmd->add_option("--out", eval_opt.out_path, "Optional JSON report path");
  add_split_flags(eval_cmd, eval_opt.split);

  CompareOptionsCli cmp_opt;
  auto* cmp_cmd = app.add_subcommand(
      "compare", "Train all variants over N re-runs and print the comparison table");
  cmp_cmd->add_option("--bags", cmp_opt.bags_dir, "Directory of .bag files")->required();
  cmp_cmd->add_option("--runs", cmp_opt.runs, "Re-runs per method (paper used 100)");
  cmp_cmd->add_option("--lr", cmp_opt.config.learning_rate, "Learning rate");
  cmp_cmd->add_option("--momentum", cmp_opt.config.momentum, "SGD momentum");
  cmp_cmd->add_option("--epochs", cmp_opt.config.epochs, "Training epochs");
  cmp_cmd->add_option("--weight-decay", cmp_opt.config.weight_decay, "L2 penalty");
  cmp_cmd->add_option("--seed", cmp_opt.config.seed, "Base seed (run i uses seed+i)");
  cmp_cmd->add_option("--attention-dim", cmp_opt.config.attention_dim, "Attention width L");
  cmp_cmd->add_option("--baseline-raster", cmp_opt.config.baseline_raster,
                      "Bag raster side for the baseline variant");
  cmp_cmd->add_option("--threshold", cmp_opt.threshold, "Decision threshold");
  cmp_cmd->add_flag("--skip-baseline", cmp_opt.skip_baseline, "Compare only the MIL variants");
  cmp_cmd->add_option("--out", cmp_opt.out_path, "JSON report path");
  add_split_flags(cmp_cmd, cmp_opt.split);

  ExplainOptions explain_opt;
  auto* explain_cmd =
      app.add_subcommand("explain", "Write attention heatmaps or integrated-gradients maps");
  explain_cmd->add_option("--bags", explain_opt.bags_dir, "Directory of .bag files")->required();
  explain_cmd->add_option("--checkpoint", explain_opt.checkpoint, "Checkpoint path")->required();
  explain_cmd->add_option("--out", explain_opt.out_dir, "Output directory")->required();
  explain_cmd->add_option("--mode", explain_opt.mode, "attention or ig");
  explain_cmd->add_option("--ig-steps", explain_opt.ig_steps, "Riemann steps (default 256)");
  explain_cmd->add_option("--ig-baseline", explain_opt.ig_baseline,
                          "white (255 raster) or black (0 raster)");
  explain_cmd->add_option("--limit", explain_opt.limit, "Explain only the first N bags");

  SynthOptions synth_opt;
  auto* synth_cmd =
      app.add_subcommand("synth", "Generate synthetic weak-label bags with signal masks");
  synth_cmd->add_option("--out", synth_opt.out_dir, "Output directory")->required();
  synth_cmd->add_option("--n-bags", synth_opt.spec.n_bags, "Number of bags");
  synth_cmd->add_option("--k", synth_opt.spec.instances_per_bag, "Instances per bag");
  synth_cmd->add_option("--m", synth_opt.spec.feature_dim, "Feature dimension");
  synth_cmd->add_option("--signal-fraction", synth_opt.spec.signal_fraction,
                        "Fraction of signal instances in positive bags");
  synth_cmd->add_option("--signal-shift", synth_opt.spec.signal_shift, "Signal shift magnitude");
  synth_cmd->add_option("--noise-std", synth_opt.spec.noise_std, "Instance noise std");
  synth_cmd->add_option("--positive-rate", synth_opt.spec.positive_rate, "Positive bag rate");
  synth_cmd->add_option("--seed", synth_opt.spec.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (tile->parsed()) return run_tile(tile_opt, args);
    if (train_cmd->parsed()) return run_train(train_opt, args);
    if (eval_cmd->parsed()) return run_eval(eval_opt, args);
    if (cmp_cmd->parsed()) return run_compare(cmp_opt, args);
    if (explain_cmd->parsed()) return run_explain(explain_opt, args);
    if (synth_cmd->parsed()) return run_synth(synth_opt, args);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
