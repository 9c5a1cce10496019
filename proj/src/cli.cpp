#include "chanprune/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include "CLI11.hpp"
#include "json.hpp"

#include "chanprune/archsearch.hpp"
#include "chanprune/catf.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/pipeline.hpp"
#include "chanprune/plan_io.hpp"
#include "chanprune/toynet.hpp"

namespace chanprune {
namespace {

using Json = nlohmann::json;

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 ok, 1 internal error, 2 usage, 3 malformed input,\n"
    "            4 infeasible budget, 5 I/O error, 6 training diverged.";

struct PruneArgs {
  std::string features;
  std::string labels;
  bool toy = false;
  std::uint64_t toy_seed = 1;
  std::optional<double> budget_flops;
  std::optional<double> budget_frac;
  int d_min = 3;
  int eta = 1;
  double eps = 1e-9;
  std::uint64_t seed = 0;
  double cap_frac = 1.0;
  std::vector<int> classes;
  bool pin_first_layer = true;
  std::string out;
  std::string save_model;
  bool quiet = false;
};

struct ReportArgs {
  std::string plan;
  std::string csv;
  std::string features;
  std::string labels;
  int layer = 0;
  std::vector<int> channels;
};

struct DumpArgs {
  std::string out;
  std::string labels_out;
  std::uint64_t toy_seed = 1;
};

std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read {}", path));
  try {
    return Json::parse(in).get<std::vector<int>>();
  } catch (const Json::exception& e) {
    throw InvalidInput(fmt::format("labels file must be a JSON array of "
                                   "integers: {}", e.what()));
  }
}

void write_labels(const std::string& path, std::span<const int> labels) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path));
  out << Json(std::vector<int>(labels.begin(), labels.end())).dump() << '\n';
}

// Dense batch (no sample features) over arbitrary non-negative label ids.
LabeledBatch label_batch(std::span<const int> raw) {
  std::vector<int> ids(raw.begin(), raw.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (!ids.empty() && ids.front() < 0) throw InvalidInput("labels must be >= 0");
  std::vector<int> dense;
  dense.reserve(raw.size());
  for (int y : raw) {
    dense.push_back(static_cast<int>(
        std::lower_bound(ids.begin(), ids.end(), y) - ids.begin()));
  }
  LabeledBatch batch = make_batch(Eigen::MatrixXd(raw.size(), 0),
                                  std::move(dense), static_cast<int>(ids.size()));
  batch.class_ids = ids;
  return batch;
}

// Same samples with labels mapped back to their original class ids.
LabeledBatch with_original_labels(const LabeledBatch& batch, int num_classes) {
  std::vector<int> labels;
  for (int y : batch.labels) labels.push_back(batch.class_ids[y]);
  return make_batch(batch.samples, std::move(labels), num_classes);
}

PipelineOptions pipeline_options(const PruneArgs& args) {
  PipelineOptions options;
  options.budget_flops = args.budget_flops;
  options.budget_frac = args.budget_frac;
  auto& cfg = options.config;
  cfg.d_min = args.d_min;
  cfg.eta = args.eta;
  cfg.eps = args.eps;
  cfg.seed = args.seed;
  cfg.cap_frac = args.cap_frac;
  cfg.pin_first_layer = args.pin_first_layer;
  if (!args.classes.empty()) {
    std::vector<int> classes = args.classes;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    cfg.class_filter = classes;
  }
  return options;
}

int run_prune(const PruneArgs& args, std::ostream& out) {
  const PipelineOptions options = pipeline_options(args);
  PipelineResult result;
  std::string toy_summary;

  if (args.toy) {
    ToyTask task = make_toy_task(default_toy_config(args.toy_seed));
    LabeledBatch train_set = task.train;
    LabeledBatch test_set = task.test;
    if (options.config.class_filter) {
      train_set = filter_classes(train_set, *options.config.class_filter);
      test_set = filter_classes(test_set, *options.config.class_filter);
    }
    result = prune_toy(task.net, train_set, options);

    const int k = task.net.num_classes();
    const LabeledBatch train_ids = with_original_labels(train_set, k);
    const LabeledBatch test_ids = with_original_labels(test_set, k);
    ToyNet pruned = apply_masks(task.net, result.pruning.masks);
    const double before = evaluate(task.net, test_ids);
    const double masked = evaluate(pruned, test_ids);
    pruned = train(std::move(pruned), train_ids, task.config.finetune);
    const double tuned = evaluate(pruned, test_ids);
    toy_summary = fmt::format(
        "Toy test accuracy: original {:.4f}, pruned {:.4f}, fine-tuned {:.4f}\n",
        before, masked, tuned);
    if (!args.save_model.empty()) save_toynet(pruned, args.save_model);
  } else {
    const FeatureDump dump = read_feature_dump(args.features);
    const std::vector<int> raw = read_labels(args.labels);
    if (static_cast<int>(raw.size()) != dump.num_samples) {
      throw InvalidInput(fmt::format("{} labels for {} samples", raw.size(),
                                     dump.num_samples));
    }
    LabeledBatch batch = label_batch(raw);
    std::vector<FeatureBlock> blocks;
    for (const auto& layer : dump.layers) blocks.push_back(layer.block);
    if (options.config.class_filter) {
      const auto rows = rows_in_classes(raw, *options.config.class_filter);
      batch = filter_classes(batch, *options.config.class_filter);
      for (auto& block : blocks) block = select_samples(block, rows);
    }
    std::vector<Eigen::MatrixXd> pooled;
    for (const auto& block : blocks) pooled.push_back(spatial_aggregate(block));
    StaticFeatures provider(std::move(blocks));
    result = run_pipeline(netspec_from_dump(dump), pooled, batch.labels,
                          batch.num_classes, provider, options);
  }

  write_plan(args.out, result.plan);
  if (!args.quiet) {
    out << render_report(result.plan);
    out << toy_summary;
    out << fmt::format("Plan written to {}\n", args.out);
  }
  return kExitOk;
}

int run_report(const ReportArgs& args, std::ostream& out) {
  const PrunePlan plan = read_plan(args.plan);
  out << render_report(plan);
  if (args.csv.empty()) return kExitOk;

  if (args.features.empty() || args.labels.empty()) {
    throw InvalidInput("--scatter-csv needs --features and --labels");
  }
  if (args.channels.size() != 2) {
    throw InvalidInput("--channels takes exactly two channel indices");
  }
  const FeatureDump dump = read_feature_dump(args.features);
  const std::vector<int> labels = read_labels(args.labels);
  if (args.layer < 0 || args.layer >= static_cast<int>(dump.layers.size())) {
    throw InvalidInput(fmt::format("dump has no layer {}", args.layer));
  }
  if (static_cast<int>(labels.size()) != dump.num_samples) {
    throw InvalidInput("label count does not match the dump");
  }
  std::ofstream csv(args.csv);
  if (!csv) throw IoError(fmt::format("cannot write {}", args.csv));
  write_scatter_csv(csv, dump.layers[args.layer].block, labels,
                    args.channels[0], args.channels[1]);
  out << fmt::format("Scatter of layer {} channels ({}, {}) written to {}\n",
                     args.layer, args.channels[0], args.channels[1], args.csv);
  return kExitOk;
}

int run_dump(const DumpArgs& args, std::ostream& out) {
  ToyTask task = make_toy_task(default_toy_config(args.toy_seed));
  ForwardResult forward = forward_features(task.net, task.train.samples);
  FeatureDump dump;
  dump.num_samples = task.train.size();
  dump.input_channels = task.net.input_dim();
  const NetSpec spec = task.net.spec();
  for (int l = 0; l < spec.num_layers(); ++l) {
    dump.layers.push_back({spec.layers[l].name, 1, to_block(forward.hidden[l])});
  }
  write_feature_dump(args.out, dump);
  write_labels(args.labels_out, task.train.labels);
  out << fmt::format("Wrote {} samples x {} layers to {} and labels to {}\n",
                     dump.num_samples, dump.layers.size(), args.out,
                     args.labels_out);
  return kExitOk;
}

std::string join(std::span<const int> values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(values[i]);
  }
  return s;
}

}  // namespace

std::string render_report(const PrunePlan& plan) {
  std::ostringstream os;
  os << fmt::format("Pruning plan: {} layers\n", plan.layers.size());
  os << fmt::format("  {:<12} {:>5} -> {:<5} {:>7} {:>7} {:>14}  {}\n", "layer",
                    "c", "d", "kept", "rounds", "FLOPs", "lambda trajectory");
  for (const auto& layer : plan.layers) {
    std::string trace;
    for (std::size_t t = 0; t < layer.lambda_history.size(); ++t) {
      if (t) trace += " -> ";
      trace += fmt::format("{:.6g}", layer.lambda_history[t]);
    }
    os << fmt::format("  {:<12} {:>5} -> {:<5} {:>6.1f}% {:>7} {:>14.0f}  {}\n",
                      layer.name, layer.channels, layer.kept,
                      100.0 * layer.kept / layer.channels, layer.iterations,
                      layer.flops, trace);
  }
  const double drop = plan.flops_original > 0.0
                          ? 100.0 * (1.0 - plan.flops_pruned / plan.flops_original)
                          : 0.0;
  os << fmt::format(
      "FLOPs: original {:.0f}, pruned {:.0f}, budget {:.0f}, drop {:.2f}%\n",
      plan.flops_original, plan.flops_pruned, plan.flops_budget, drop);
  os << fmt::format("Channel-count search: after {} iterations\n",
                    plan.search_iterations);
  const auto& cfg = plan.config;
  os << fmt::format(
      "Config: d_min={} eta={} eps={:g} seed={} cap_frac={:g} "
      "pin_first_layer={} class_filter={}\n",
      cfg.d_min, cfg.eta, cfg.eps, cfg.seed, cfg.cap_frac,
      cfg.pin_first_layer ? "on" : "off",
      cfg.class_filter ? join(*cfg.class_filter) : std::string("all"));
  return os.str();
}

void write_scatter_csv(std::ostream& out, const FeatureBlock& block,
                       std::span<const int> labels, int x, int y) {
  if (x < 0 || y < 0 || x >= block.channels || y >= block.channels) {
    throw InvalidInput(fmt::format("channels ({}, {}) outside [0, {})", x, y,
                                   block.channels));
  }
  const Eigen::MatrixXd pooled = spatial_aggregate(block);
  out << "x,y,label\n";
  for (int n = 0; n < block.samples; ++n) {
    out << fmt::format("{:.9g},{:.9g},{}\n", pooled(x, n), pooled(y, n),
                       labels[n]);
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Class-aware trace-ratio channel pruning"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  PruneArgs prune;
  auto* prune_cmd = app.add_subcommand(
      "prune", "Choose channel counts under a FLOPs budget, then channels");
  auto* features_opt =
      prune_cmd->add_option("--features", prune.features, "CATF feature dump");
  prune_cmd->add_option("--labels", prune.labels, "JSON array of sample labels")
      ->needs(features_opt);
  features_opt->needs("--labels");
  prune_cmd->add_flag("--toy", prune.toy, "Use the built-in toy network")
      ->excludes(features_opt);
  prune_cmd->add_option("--toy-seed", prune.toy_seed, "Toy data/network seed")
      ->capture_default_str();
  auto* flops_opt = prune_cmd->add_option("--budget-flops", prune.budget_flops,
                                          "Absolute FLOPs budget");
  prune_cmd
      ->add_option("--budget-frac", prune.budget_frac,
                   "Budget as a fraction of the original FLOPs, in (0, 1]")
      ->excludes(flops_opt);
  prune_cmd->add_option("--d-min", prune.d_min, "Initial channels per layer")
      ->capture_default_str();
  prune_cmd->add_option("--eta", prune.eta, "Channel-count step size")
      ->capture_default_str();
  prune_cmd->add_option("--eps", prune.eps, "Relative ratio stop criterion")
      ->capture_default_str();
  prune_cmd->add_option("--seed", prune.seed, "Random initialization seed")
      ->capture_default_str();
  prune_cmd
      ->add_option("--cap-frac", prune.cap_frac,
                   "Max kept channels per layer as a fraction of c_l")
      ->capture_default_str();
  prune_cmd
      ->add_option("--classes", prune.classes,
                   "Comma-separated class ids to specialize for")
      ->delimiter(',');
  prune_cmd
      ->add_flag("--pin-first-layer,!--no-pin-first-layer",
                 prune.pin_first_layer, "Keep every channel of the first layer")
      ->capture_default_str();
  prune_cmd->add_option("--out", prune.out, "Plan JSON output path")->required();
  prune_cmd->add_option("--save-model", prune.save_model,
                        "Toy only: save the pruned, fine-tuned net (JSON + .bin)");
  prune_cmd->add_flag("--quiet", prune.quiet, "Suppress the report");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Render a plan");
  report_cmd->add_option("plan", report.plan, "Plan JSON")->required();
  report_cmd->add_option("--scatter-csv", report.csv,
                         "Export a two-channel feature scatter as CSV");
  report_cmd->add_option("--features", report.features, "CATF feature dump");
  report_cmd->add_option("--labels", report.labels, "JSON array of labels");
  report_cmd->add_option("--layer", report.layer, "Layer index for the scatter")
      ->capture_default_str();
  report_cmd->add_option("--channels", report.channels, "Two channels, e.g. 0,5")
      ->delimiter(',');

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand(
      "toy-dump", "Write the toy network's training features as CATF");
  dump_cmd->add_option("--out", dump.out, "CATF output path")->required();
  dump_cmd->add_option("--labels-out", dump.labels_out, "Labels JSON output")
      ->required();
  dump_cmd->add_option("--toy-seed", dump.toy_seed, "Toy data/network seed")
      ->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (prune_cmd->parsed()) {
      if (!prune.toy && prune.features.empty()) {
        throw CLI::ValidationError("prune", "one of --toy or --features is required");
      }
      if (!prune.budget_flops && !prune.budget_frac) {
        throw CLI::ValidationError(
            "prune", "one of --budget-flops or --budget-frac is required");
      }
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (prune_cmd->parsed()) return run_prune(prune, out);
    if (report_cmd->parsed()) return run_report(report, out);
    return run_dump(dump, out);
  } catch (const InfeasibleBudget& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const CatfError& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == CatfErrorCode::kIo ? kExitIo : kExitBadInput;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace chanprune
