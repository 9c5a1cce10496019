#include "chanprune/plan_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

namespace chanprune {
namespace {

using Json = nlohmann::json;

constexpr const char* kPlanFormat = "chanprune-plan";
constexpr int kPlanVersion = 1;

std::string real(double v) {
  if (!std::isfinite(v)) {
    throw InvalidInput(fmt::format("cannot serialize non-finite value {}", v));
  }
  return fmt::format("{:.17g}", v);
}

template <typename T, typename Fmt>
std::string list(const std::vector<T>& values, Fmt&& fmt_one) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt_one(values[i]);
  }
  return out + "]";
}

std::string quoted(const std::string& s) { return Json(s).dump(); }

}  // namespace

std::string plan_to_json(const PrunePlan& plan) {
  auto integer = [](int v) { return std::to_string(v); };
  std::string out = "{\n";
  out += fmt::format("  \"format\": \"{}\",\n  \"version\": {},\n", kPlanFormat,
                     kPlanVersion);
  out += "  \"layers\": [\n";
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& layer = plan.layers[l];
    out += "    {\n";
    out += fmt::format("      \"name\": {},\n", quoted(layer.name));
    out += fmt::format("      \"c\": {},\n", layer.channels);
    out += fmt::format("      \"d\": {},\n", layer.kept);
    out += fmt::format("      \"retained_indices\": {},\n",
                       list(layer.retained, integer));
    out += fmt::format("      \"lambda_history\": {},\n",
                       list(layer.lambda_history, real));
    out += fmt::format("      \"iterations\": {},\n", layer.iterations);
    out += fmt::format("      \"flops\": {}\n", real(layer.flops));
    out += l + 1 < plan.layers.size() ? "    },\n" : "    }\n";
  }
  out += "  ],\n";
  out += fmt::format(
      "  \"flops\": {{\n    \"original\": {},\n    \"pruned\": {},\n"
      "    \"budget\": {}\n  }},\n",
      real(plan.flops_original), real(plan.flops_pruned),
      real(plan.flops_budget));
  out += fmt::format("  \"search\": {{\n    \"iterations\": {}\n  }},\n",
                     plan.search_iterations);

  const auto& cfg = plan.config;
  out += "  \"config\": {\n";
  out += fmt::format("    \"d_min\": {},\n", cfg.d_min);
  out += fmt::format("    \"eta\": {},\n", cfg.eta);
  out += fmt::format("    \"eps\": {},\n", real(cfg.eps));
  out += fmt::format("    \"seed\": {},\n", cfg.seed);
  out += fmt::format("    \"cap_frac\": {},\n", real(cfg.cap_frac));
  out += fmt::format("    \"class_filter\": {},\n",
                     cfg.class_filter ? list(*cfg.class_filter, integer)
                                      : std::string("null"));
  out += fmt::format("    \"pin_first_layer\": {}\n",
                     cfg.pin_first_layer ? "true" : "false");
  out += "  }\n}\n";
  return out;
}

PrunePlan plan_from_json(const std::string& text) {
  PrunePlan plan;
  try {
    const Json doc = Json::parse(text);
    if (doc.at("format").get<std::string>() != kPlanFormat ||
        doc.at("version").get<int>() != kPlanVersion) {
      throw InvalidInput("not a version 1 chanprune plan");
    }
    for (const auto& j : doc.at("layers")) {
      PlanLayer layer;
      layer.name = j.at("name").get<std::string>();
      layer.channels = j.at("c").get<int>();
      layer.kept = j.at("d").get<int>();
      layer.retained = j.at("retained_indices").get<IndexSet>();
      layer.lambda_history = j.at("lambda_history").get<std::vector<double>>();
      layer.iterations = j.at("iterations").get<int>();
      layer.flops = j.at("flops").get<double>();
      plan.layers.push_back(std::move(layer));
    }
    const auto& flops = doc.at("flops");
    plan.flops_original = flops.at("original").get<double>();
    plan.flops_pruned = flops.at("pruned").get<double>();
    plan.flops_budget = flops.at("budget").get<double>();
    plan.search_iterations = doc.at("search").at("iterations").get<int>();

    const auto& cfg = doc.at("config");
    plan.config.d_min = cfg.at("d_min").get<int>();
    plan.config.eta = cfg.at("eta").get<int>();
    plan.config.eps = cfg.at("eps").get<double>();
    plan.config.seed = cfg.at("seed").get<std::uint64_t>();
    plan.config.cap_frac = cfg.at("cap_frac").get<double>();
    if (!cfg.at("class_filter").is_null()) {
      plan.config.class_filter = cfg.at("class_filter").get<std::vector<int>>();
    }
    plan.config.pin_first_layer = cfg.at("pin_first_layer").get<bool>();
  } catch (const Json::exception& e) {
    throw InvalidInput(fmt::format("malformed plan: {}", e.what()));
  }
  validate_plan(plan);
  return plan;
}

void write_plan(const std::filesystem::path& path, const PrunePlan& plan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << plan_to_json(plan);
}

PrunePlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return plan_from_json(buffer.str());
}

}  // namespace chanprune
