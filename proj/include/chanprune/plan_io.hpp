#pragma once

#include <filesystem>
#include <string>

#include "chanprune/core.hpp"

namespace chanprune {

/// Plan as JSON text. Reals are printed with 17 significant digits and keys
/// in a fixed order, so write -> read -> write is byte-stable.
std::string plan_to_json(const PrunePlan& plan);

/// Parses and validates a plan document. Throws InvalidInput when malformed.
PrunePlan plan_from_json(const std::string& text);

void write_plan(const std::filesystem::path& path, const PrunePlan& plan);
PrunePlan read_plan(const std::filesystem::path& path);

}  // namespace chanprune
