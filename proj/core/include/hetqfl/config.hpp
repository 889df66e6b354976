#pragma once

// Experiment configuration: a strict JSON schema resolved into the
// structures the federation runner consumes. Unknown keys and
// out-of-range values are rejected with messages naming the offending
// field. Per-client fields (qubits, layers, phi, sigma_sq, noise) accept
// a scalar, an array with one entry per client, or {"round_robin": [...]}
// cycling a shorter list across clients.

#include <string>
#include <vector>

#include "hetqfl/fed.hpp"

namespace hetqfl::cli {

struct ExperimentConfig {
  fed::ExperimentSpec spec;
  std::vector<fed::Algorithm> algorithms = {fed::Algorithm::spqfl};
  std::string output_dir = "out";
  bool save_models = false;
  bool quiet = false;

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws hetqfl::config_error on malformed input.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& json_text);

// Canonical JSON echo of the resolved configuration, with every field
// explicit. Parsing the echo reproduces the same configuration.
std::string effective_config_text(const ExperimentConfig& config);

}  // namespace hetqfl::cli
