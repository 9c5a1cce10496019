#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chanprune/core.hpp"

namespace chanprune {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,      // unexpected internal error
  kExitUsage = 2,        // bad or missing flags
  kExitBadInput = 3,     // malformed plan, labels, features or config
  kExitInfeasible = 4,   // FLOPs budget below the minimum architecture
  kExitIo = 5,           // file could not be read or written
  kExitDiverged = 6,     // toy training produced a non-finite loss
};

/// Entry point behind the `chanprune` binary. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

/// Human-readable rendering of a plan.
std::string render_report(const PrunePlan& plan);

/// Writes "x,y,label" followed by one row per sample: the pooled values of
/// channels `x` and `y` and the sample's label.
void write_scatter_csv(std::ostream& out, const FeatureBlock& block,
                       std::span<const int> labels, int x, int y);

}  // namespace chanprune
