// Acceptance gate: one PASS/FAIL line per criterion; non-zero exit on failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "chanprune/archsearch.hpp"
#include "chanprune/catf.hpp"
#include "chanprune/cli.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/oracle.hpp"
#include "chanprune/pipeline.hpp"
#include "chanprune/plan_io.hpp"
#include "chanprune/toynet.hpp"
#include "chanprune/traceratio.hpp"

namespace cp = chanprune;

namespace {

// Toy seed whose 5-class plan retains different channels than the 10-class one.
constexpr std::uint64_t kSubtaskSeed = 1;

struct Outcome {
  bool ok = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

bool run_criterion(int id, const char* title, double limit_s,
                   const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  const bool timely = secs < limit_s;
  const bool pass = out.ok && timely;
  fmt::print("{} criterion {:>2}: {} ({:.2f}s / {:.0f}s){}{}\n",
             pass ? "PASS" : "FAIL", id, title, secs, limit_s,
             out.detail.empty() ? "" : " | ", out.detail);
  std::fflush(stdout);
  return pass;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

double vec_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    diff = std::max(diff, std::abs(a[i] - b[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

cp::LayerScatter random_layer(std::mt19937_64& rng, int c) {
  std::uniform_real_distribution<double> bdist(0.0, 10.0);
  std::uniform_real_distribution<double> wdist(0.0, 10.0);
  cp::LayerScatter s;
  for (int i = 0; i < c; ++i) {
    s.between.push_back(bdist(rng));
    double w = wdist(rng);
    s.within.push_back(w > 0.0 ? w : 10.0);  // (0, 10]
  }
  return s;
}

Outcome dinkelbach_optimality() {
  std::mt19937_64 rng(101);
  int failures = 0;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int c = std::uniform_int_distribution<int>(2, 12)(rng);
    const int d = std::uniform_int_distribution<int>(1, std::min(6, c))(rng);
    const cp::LayerScatter s = random_layer(rng, c);
    const auto state = cp::fixed_point(s, d, rng());
    const auto best = cp::oracle::brute_force_best_subset(s, d);
    const double e = rel_err(state.lambda, best.lambda);
    worst = std::max(worst, e);
    if (e > 1e-9) ++failures;
  }
  return {failures == 0,
          fmt::format("100 layers, failures {}, max rel err {:.2e}", failures, worst)};
}

Outcome monotone_trajectory() {
  std::mt19937_64 rng(202);
  int violations = 0, max_iter = 0;
  for (int t = 0; t < 200; ++t) {
    const int c = std::uniform_int_distribution<int>(2, 30)(rng);
    const int d = std::uniform_int_distribution<int>(1, c)(rng);
    // Scatter diagonals of a random feature matrix are PSD-consistent.
    const int n = 24;
    Eigen::MatrixXd feats(c, n);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<int> labels(n);
    for (int j = 0; j < n; ++j) labels[j] = j % 3;
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < n; ++j) feats(i, j) = g(rng) + 0.7 * g(rng) * labels[j];
    const auto s = cp::channel_scatter_streaming(feats, labels, 3);
    const auto state = cp::fixed_point(s, d, rng());
    for (std::size_t k = 1; k < state.lambda_history.size(); ++k) {
      if (state.lambda_history[k] < state.lambda_history[k - 1] - 1e-12) ++violations;
    }
    max_iter = std::max(max_iter, state.iterations);
  }
  return {violations == 0 && max_iter <= 10,
          fmt::format("200 instances, decreases {}, max iterations {}", violations,
                      max_iter)};
}

Outcome lemma_exhaustive() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 3.0);
  long long triples = 0, violations = 0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> raw(6);
    for (double& r : raw) r = g(rng);
    const auto report = cp::oracle::check_submodular_monotone(raw, 1e-12);
    triples += report.triples_checked;
    violations += static_cast<long long>(report.violations.size());
  }
  return {violations == 0,
          fmt::format("{} triples, {} violations", triples, violations)};
}

Outcome greedy_bound() {
  std::mt19937_64 rng(404);
  int failures = 0;
  double worst_margin = INFINITY, worst_gap = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + t % 3;
    const cp::LayerScatter s = random_layer(rng, 10);
    // λ is the ratio of some d-subset, as it always is inside the fixed point.
    const double lambda = cp::lambda_of(cp::random_subset(10, d, rng()), s);
    const auto raw = cp::raw_scores(s, lambda);
    const auto report = cp::oracle::greedy_bound_check(raw, d);
    const double gap = std::abs(report.top_value - report.best_value);
    worst_margin = std::min(worst_margin, report.min_margin);
    worst_gap = std::max(worst_gap, gap);
    if (report.min_margin < -1e-12 || gap > 1e-12) ++failures;
  }
  return {failures == 0,
          fmt::format("50 instances, min margin {:.3e}, max |top - best| {:.1e}",
                      worst_margin, worst_gap)};
}

Outcome scatter_equivalence() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int k = std::uniform_int_distribution<int>(2, 5)(rng);
    const int n = std::uniform_int_distribution<int>(2 * k, 64)(rng);
    const int c = std::uniform_int_distribution<int>(1, 32)(rng);
    std::vector<int> labels(n);
    for (int j = 0; j < n; ++j) labels[j] = j % k;
    std::shuffle(labels.begin(), labels.end(), rng);
    Eigen::MatrixXd o(c, n);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < n; ++j) o(i, j) = 3.0 * g(rng) + labels[j];

    const auto dense = cp::channel_scatter_dense(o, cp::build_class_graphs(labels, k));
    const auto stream = cp::channel_scatter_streaming(o, labels, k);
    const auto scaled = cp::channel_scatter_streaming(2.0 * o, labels, k);
    const auto shifted =
        cp::channel_scatter_streaming((o.array() + 5.0).matrix(), labels, k);
    std::vector<double> b4 = stream.between, w4 = stream.within;
    for (double& v : b4) v *= 4.0;
    for (double& v : w4) v *= 4.0;
    worst = std::max({worst, vec_rel_err(dense.between, stream.between),
                      vec_rel_err(dense.within, stream.within),
                      vec_rel_err(scaled.between, b4), vec_rel_err(scaled.within, w4),
                      vec_rel_err(shifted.between, stream.between),
                      vec_rel_err(shifted.within, stream.within)});
  }
  return {worst <= 1e-9, fmt::format("100 instances, max rel err {:.2e}", worst)};
}

cp::NetSpec random_spec(std::mt19937_64& rng, int layers) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  cp::NetSpec spec;
  spec.input_channels = pick(1, 8);
  for (int l = 0; l < layers; ++l) {
    const int hw = pick(1, 16);
    spec.layers.push_back({fmt::format("conv{}", l + 1), pick(4, 24), hw, hw,
                           pick(0, 1) ? 3 : 1});
  }
  return spec;
}

Outcome flops_model() {
  std::mt19937_64 rng(606);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const cp::NetSpec spec = random_spec(rng, std::uniform_int_distribution<int>(3, 6)(rng));
    std::vector<int> kept;
    for (const auto& layer : spec.layers)
      kept.push_back(std::uniform_int_distribution<int>(1, layer.channels)(rng));
    for (int l = 1; l + 1 < spec.num_layers(); ++l) {
      std::vector<int> up = kept;
      up[l] += 1;
      const double fd = cp::total_flops(up, spec) - cp::total_flops(kept, spec);
      worst = std::max(worst, rel_err(cp::dT_dd(kept, l, spec, 10), fd));
    }
  }

  int over_budget = 0, bad_stop = 0;
  for (int t = 0; t < 100; ++t) {
    const int layers = std::uniform_int_distribution<int>(1, 5)(rng);
    const cp::NetSpec spec = random_spec(rng, layers);
    cp::ScatterStats stats;
    for (const auto& layer : spec.layers) stats.push_back(random_layer(rng, layer.channels));
    cp::SearchConfig cfg;
    cfg.d_min = std::uniform_int_distribution<int>(1, 3)(rng);
    cfg.eta = std::uniform_int_distribution<int>(1, 2)(rng);
    cfg.pin_first_layer = t % 2 == 0;
    cfg.cap_frac = t % 3 == 0 ? 0.5 : 1.0;
    cfg.seed = rng();
    cfg.num_classes = 10;
    std::vector<int> full;
    for (const auto& layer : spec.layers) full.push_back(layer.channels);
    const auto caps = cp::layer_caps(spec, cfg);
    if (*std::min_element(caps.begin(), caps.end()) < cfg.d_min) cfg.cap_frac = 1.0;
    std::vector<int> start = cp::layer_caps(spec, cfg);
    for (int l = 0; l < layers; ++l) {
      if (!(cfg.pin_first_layer && l == 0)) start[l] = cfg.d_min;
    }
    const double lo = cp::total_flops(start, spec);
    const double hi = cp::total_flops(full, spec);
    cfg.budget = lo + std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (hi - lo);
    cfg.on_step = [&](const cp::ArchState& s) {
      if (cp::total_flops(s.kept, spec) > cfg.budget) ++over_budget;
    };
    const auto state = cp::greedy_search(stats, spec, cfg);
    if (cp::total_flops(state.kept, spec) > cfg.budget) ++over_budget;
    const auto top = std::max_element(state.gamma.begin(), state.gamma.end());
    if (*top != cp::kSaturated) {
      std::vector<int> trial = state.kept;
      trial[top - state.gamma.begin()] += cfg.eta;
      if (cp::total_flops(trial, spec) <= cfg.budget) ++bad_stop;
    }
  }
  return {worst <= 1e-12 && over_budget == 0 && bad_stop == 0,
          fmt::format("dT max rel err {:.1e}; 100 searches, over-budget {}, "
                      "premature stops {}",
                      worst, over_budget, bad_stop)};
}

std::vector<cp::LayerMask> random_masks(const cp::ToyNet& net, std::mt19937_64& rng) {
  std::vector<cp::LayerMask> masks;
  for (int c : net.widths()) {
    const int d = std::uniform_int_distribution<int>(1, c)(rng);
    masks.push_back(cp::LayerMask::from_indices(c, cp::random_subset(c, d, rng())));
  }
  return masks;
}

Outcome mask_equivalence() {
  std::mt19937_64 rng(707);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::vector<int> widths{16, 32, 32};
    const cp::ToyNet net = cp::make_toynet(16, widths, 10, rng());
    const auto masks = random_masks(net, rng);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(100, 16) * 3.0;
    const Eigen::MatrixXd masked = cp::forward_features(net, x, masks).logits;
    const Eigen::MatrixXd pruned =
        cp::forward_features(cp::apply_masks(net, masks), x).logits;
    const double scale = std::max(masked.cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, (masked - pruned).cwiseAbs().maxCoeff() / scale);
  }
  return {worst <= 1e-9, fmt::format("10 net/mask pairs, max rel err {:.2e}", worst)};
}

Outcome gradient_check() {
  const cp::ToyConfig cfg = cp::default_toy_config(8);
  cp::SyntheticSpec data = cfg.data;
  data.samples = 200;
  const cp::LabeledBatch batch = cp::gen_synthetic(data);
  cp::ToyNet net = cp::make_toynet(data.input_dim, cfg.widths, data.num_classes, 8);
  const std::vector<double> analytic = cp::flatten(cp::gradient(net, batch));
  std::vector<double> params = cp::flatten(net);

  std::mt19937_64 rng(808);
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  double worst = 0.0;
  const double h = 1e-6;
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = pick(rng);
    const double saved = params[i];
    params[i] = saved + h;
    cp::unflatten(net, params);
    const double up = cp::loss(net, batch);
    params[i] = saved - h;
    cp::unflatten(net, params);
    const double down = cp::loss(net, batch);
    params[i] = saved;
    cp::unflatten(net, params);
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return {worst <= 1e-4, fmt::format("20 parameters, max rel err {:.2e}", worst)};
}

double finetuned_accuracy(const cp::ToyTask& task, const cp::ChannelMask& masks) {
  cp::ToyNet net = cp::apply_masks(task.net, masks);
  net = cp::train(std::move(net), task.train, task.config.finetune);
  return cp::evaluate(net, task.test);
}

Outcome toy_end_to_end() {
  constexpr int kSeeds = 10;
  double sum_diff = 0.0;
  std::string per_seed;
  for (int s = 1; s <= kSeeds; ++s) {
    const cp::ToyTask task = cp::make_toy_task(cp::default_toy_config(s));
    cp::PipelineOptions options;
    options.budget_frac = 0.5;
    options.config.seed = s;
    const auto result = cp::prune_toy(task.net, task.train, options);

    cp::ChannelMask random;
    const auto& plan = result.plan;
    for (std::size_t l = 0; l < plan.layers.size(); ++l) {
      const int c = plan.layers[l].channels, d = plan.layers[l].kept;
      random.push_back(cp::LayerMask::from_indices(
          c, cp::random_subset(c, d, cp::layer_seed(1000 + s, static_cast<int>(l)))));
    }
    const double ours = finetuned_accuracy(task, result.pruning.masks);
    const double baseline = finetuned_accuracy(task, random);
    sum_diff += ours - baseline;
    per_seed += fmt::format("{}{:+.3f}", s == 1 ? "" : " ", ours - baseline);
  }
  const double mean = sum_diff / kSeeds;
  return {mean > 0.0,
          fmt::format("{} seeds, mean accuracy gain over random {:+.4f} [{}]", kSeeds,
                      mean, per_seed)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "chanprune_acceptance";
  std::filesystem::create_directories(dir);
  std::ostringstream sink;
  std::vector<std::string> plans;
  for (int run = 0; run < 2; ++run) {
    const auto out = dir / fmt::format("plan{}.json", run);
    const int rc = cp::run_cli({"chanprune", "prune", "--toy", "--toy-seed", "3",
                                "--budget-frac", "0.5", "--seed", "7", "--quiet",
                                "--out", out.string()},
                               sink, sink);
    if (rc != 0) return {false, fmt::format("cli exit code {}", rc)};
    plans.push_back(slurp(out));
  }
  const bool plans_equal = plans[0] == plans[1] && !plans[0].empty();
  const bool plan_round_trip =
      cp::plan_to_json(cp::plan_from_json(plans[0])) == plans[0];

  const auto dump_path = dir / "toy.catf";
  const auto labels_path = dir / "labels.json";
  const int rc = cp::run_cli({"chanprune", "toy-dump", "--toy-seed", "3", "--out",
                              dump_path.string(), "--labels-out", labels_path.string()},
                             sink, sink);
  if (rc != 0) return {false, fmt::format("toy-dump exit code {}", rc)};
  const std::string raw = slurp(dump_path);
  const std::vector<char> bytes(raw.begin(), raw.end());
  const bool catf_round_trip =
      cp::encode_feature_dump(cp::decode_feature_dump(bytes)) == bytes;
  std::filesystem::remove_all(dir);
  return {plans_equal && plan_round_trip && catf_round_trip,
          fmt::format("plans identical {}, plan round-trip {}, CATF round-trip {}",
                      plans_equal, plan_round_trip, catf_round_trip)};
}

Outcome subtask_sensitivity() {
  const cp::ToyTask task = cp::make_toy_task(cp::default_toy_config(kSubtaskSeed));
  cp::PipelineOptions options;
  options.budget_frac = 0.5;
  const auto all = cp::prune_toy(task.net, task.train, options).plan;

  const std::vector<int> subset{0, 1, 2, 3, 4};
  options.config.class_filter = subset;
  const cp::LabeledBatch sub = cp::filter_classes(task.train, subset);
  const auto five = cp::prune_toy(task.net, sub, options).plan;

  int differing = 0;
  for (std::size_t l = 0; l < all.layers.size(); ++l) {
    if (all.layers[l].retained != five.layers[l].retained) ++differing;
  }
  return {differing > 0, fmt::format("seed {}, {} of {} layers retain different "
                                     "channels",
                                     kSubtaskSeed, differing, all.layers.size())};
}

}  // namespace

int main() {
  int failed = 0;
  auto gate = [&](int id, const char* title, double limit,
                  const std::function<Outcome()>& body) {
    if (!run_criterion(id, title, limit, body)) ++failed;
  };
  gate(1, "fixed point reaches brute-force optimum", 5, dinkelbach_optimality);
  gate(2, "monotone ratio trajectory", 5, monotone_trajectory);
  gate(3, "set function monotone and submodular", 10, lemma_exhaustive);
  gate(4, "top-d meets the (1 - 1/e) bound and is optimal", 10, greedy_bound);
  gate(5, "dense and streaming scatter agree", 5, scatter_equivalence);
  gate(6, "FLOPs derivative exact, search within budget", 5, flops_model);
  gate(7, "pruned net equals zero-masked net", 5, mask_equivalence);
  gate(8, "analytic gradient matches finite differences", 5, gradient_check);
  gate(9, "trace-ratio selection beats random at 50% FLOPs", 60, toy_end_to_end);
  gate(10, "deterministic plans and byte-stable round-trips", 5, determinism);
  gate(11, "class subset changes the retained channels", 30, subtask_sensitivity);
  fmt::print("{} of 11 criteria passed\n", 11 - failed);
  return failed == 0 ? 0 : 1;
}
