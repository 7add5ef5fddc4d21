#pragma once
// SVG figures from run ledgers: trajectory composition per round and
// success against cumulative env steps.

#include <span>
#include <string>
#include <vector>

#include "noisesteer/harness/ledger.hpp"

namespace noisesteer {

struct LabeledLedger {
  std::string label;
  RunLedger ledger;
};

/// Stacked bars (model-only, mixed, human-only episodes) for each round.
std::string composition_svg(const LabeledLedger& run);
/// One polyline per run: evaluation Overall vs env steps.
std::string success_curve_svg(std::span<const LabeledLedger> runs);

/// Writes composition_<label>.svg per run and success_vs_env_steps.svg into
/// `out_dir` (created if needed). Returns the written paths.
std::vector<std::string> emit_plots(std::span<const LabeledLedger> runs, const std::string& out_dir);

}  // namespace noisesteer
