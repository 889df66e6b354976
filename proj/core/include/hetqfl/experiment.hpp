#pragma once

// Top-level entry points behind the command line tool. run() executes
// every configured algorithm over every seed and writes, under the output
// directory:
//   <algo>/records_seed<S>.jsonl   one JSON object per line; client rows
//                                  and one global row per round, all rows
//                                  carrying the same key set
//   <algo>/summary.csv             one row per (seed, round)
//   <algo>/model_seed<S>.bin       final global model (when enabled)
//   comparison.csv                 per-round mean curves (2+ algorithms)
//   comparison_final.csv           final-round means and deltas
//   config_effective.json          the resolved configuration
// Identical configurations produce byte-identical record files.

#include <string>
#include <vector>

#include "hetqfl/config.hpp"

namespace hetqfl::cli {

// Returns a process exit code: 0 success, 1 configuration error,
// 2 runtime failure. Diagnostics go to stderr.
int run(const ExperimentConfig& config);

// Joins the summary.csv of two or more run directories into per-round
// mean curves (truncated to the common round prefix) plus a final-round
// table with accuracy deltas against the first run, in percentage points.
// Writes <out_path> and <out_path stem>_final.csv. Same exit codes.
int compare(const std::vector<std::string>& run_dirs,
            const std::string& out_path);

}  // namespace hetqfl::cli
