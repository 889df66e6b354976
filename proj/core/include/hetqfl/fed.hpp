#pragma once

// Federated orchestration: client profiles, aggregation strategies, the
// sporadic participation gate, and the round/experiment loops.
//
// One round broadcasts the global model, trains every client locally for
// a fixed number of anchored steps, gates clients whose validation
// accuracy falls below the threshold (when the algorithm gates at all),
// and aggregates the participants' parameters under the selected
// weighting. Heterogeneous clients hold models with fewer qubits or
// layers; their parameters enter the aggregate through zero-padding with
// a presence mask, and coordinates with no contributor keep their
// previous global value.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hetqfl/common.hpp"
#include "hetqfl/data.hpp"
#include "hetqfl/encode.hpp"
#include "hetqfl/qnn.hpp"
#include "hetqfl/qsim.hpp"

namespace hetqfl::fed {

enum class Algorithm { qnn_central, qfl_fedavg, pqfl, wpqfl, spqfl };
enum class Strategy { uniform, layerwise, noise_aware, fairness, encoding_aware };
enum class OptimizerKind { sgd, adam };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);
std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct ClientProfile {
  int id = 0;
  int num_qubits = 1;
  int num_layers = 1;
  double phi = 1.0;  // device quality proxy in (0, 1]
  qsim::NoiseConfig noise;
  // Parameter variance used by noise-aware weighting. Nonpositive means
  // "derive from phi" as max(1e-6, 1 - phi).
  double sigma_sq = 0.0;

  double effective_sigma_sq() const;
  void validate() const;

  bool operator==(const ClientProfile&) const = default;
};

// Participation threshold. The adaptive mode tracks half the previous
// round's mean validation accuracy, clamped to [0.2, 0.9]; with no
// history it starts at the lower clamp.
struct TauPolicy {
  enum class Mode { disabled, fixed, adaptive };
  Mode mode = Mode::adaptive;
  double fixed_value = 0.5;

  bool operator==(const TauPolicy&) const = default;
};

inline constexpr double kTauFloor = 0.2;
inline constexpr double kTauCeil = 0.9;
inline constexpr double kTauScale = 0.5;

// ----- aggregation primitives ---------------------------------------------

// Plain mean of equally shaped parameter vectors.
Eigen::VectorXd fedavg(const std::vector<Eigen::VectorXd>& params);

// Mean over contributors per layer for models that share qubit count and
// class count but differ in depth. Layer l of the result averages the
// clients whose depth exceeds l; the head averages everyone. With equal
// depths this reproduces fedavg exactly, including the order of floating
// point operations.
Eigen::VectorXd layerwise_aggregate(const std::vector<Eigen::VectorXd>& params,
                                    const std::vector<int>& depths,
                                    int num_qubits, int num_classes);

// Softmax-style weights from trace distances to a reference state:
// w_i proportional to exp(-alpha * d(rho_i, rho_ref)). Sum to one.
Eigen::VectorXd encoding_aware_weights(
    const std::vector<qsim::QuantumState>& states,
    const qsim::QuantumState& reference, double alpha);

// Capability-proportional weights: w_i proportional to qubits_i * phi_i.
Eigen::VectorXd fairness_weights(const std::vector<int>& num_qubits,
                                 const std::vector<double>& phi);

// Inverse-variance weighted mean. Clients reporting zero variance are
// treated as exact: the result is the uniform mean over the zero-variance
// subset, which is the limit of the weighting as those variances shrink.
Eigen::VectorXd noise_aware_aggregate(const std::vector<Eigen::VectorXd>& params,
                                      const std::vector<double>& sigma_sq);

// Indices (ascending) of clients whose accuracy meets the threshold.
std::vector<int> sporadic_select(const std::vector<double>& accuracies,
                                 double tau);

// ----- heterogeneous parameter plumbing ------------------------------------

struct PaddedParams {
  Eigen::VectorXd values;  // zero where absent
  Eigen::VectorXd mask;    // 1.0 where the client owns the coordinate
};

// Embeds a smaller model's parameters into a larger layout. Angle
// (l, qb, ax) and head entries survive for l < from layers and
// qb < from qubits; class count must match.
PaddedParams pad_params(const Eigen::VectorXd& params,
                        const qnn::ParamLayout& from,
                        const qnn::ParamLayout& to);

// The adjoint of pad_params: restricts a global parameter vector to a
// smaller layout, dropping the extra layers and qubit rows.
Eigen::VectorXd slice_params(const Eigen::VectorXd& global,
                             const qnn::ParamLayout& from,
                             const qnn::ParamLayout& to);

// ----- experiment description ----------------------------------------------

struct DataSpec {
  enum class Source { blobs, idx, csv };
  Source source = Source::blobs;
  // blobs
  int blob_n = 2000;
  int blob_classes = 4;
  int blob_dim = 16;
  double blob_spread = 0.25;
  // files
  std::string images_path;
  std::string labels_path;
  std::string csv_path;
  // optional preprocessing for file sources
  int reduce_dim = 0;  // 0 = keep original dimensionality
  data::ReduceMethod reduce_method = data::ReduceMethod::avgpool;
  int subsample = 0;  // 0 = keep all samples

  bool operator==(const DataSpec&) const = default;
};

struct Hyper {
  OptimizerKind optimizer = OptimizerKind::sgd;
  double eta = 0.001;
  double lambda = 0.1;
  double gamma_ns = 1.0;
  double alpha = 1.0;
  int rounds = 50;
  int local_steps = 5;
  int batch_size = 32;
  int shots = 0;  // 0 = exact readout
  TauPolicy tau;
  Strategy strategy = Strategy::uniform;
  bool strategy_explicit = false;  // set when the config names a strategy

  bool operator==(const Hyper&) const = default;
};

struct ExperimentSpec {
  DataSpec dataset;
  int num_clients = 8;
  int classes_per_client = 2;
  std::vector<ClientProfile> clients;  // resolved, size num_clients
  encode::EncoderKind encoder = encode::EncoderKind::amplitude;
  encode::Normalization normalization = encode::Normalization::l2;
  double train_fraction = 0.8;
  Hyper hyper;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  void validate() const;

  bool operator==(const ExperimentSpec&) const = default;
};

// Effective per-run settings once an algorithm preset is applied:
// qfl_fedavg turns the anchor and noise weighting off, pqfl keeps the
// anchor, wpqfl adds fairness weighting unless the config names another
// strategy, spqfl adds gating and noise-weighted steps, and qnn_central
// pools all data into one ideal client.
struct ResolvedAlgorithm {
  Algorithm algorithm = Algorithm::spqfl;
  double lambda = 0.0;
  double gamma_ns = 0.0;
  bool gate_participation = false;
  Strategy strategy = Strategy::uniform;
};
ResolvedAlgorithm resolve_algorithm(Algorithm algorithm, const Hyper& hyper);

// ----- runtime state ---------------------------------------------------------

struct ClientRuntime {
  ClientProfile profile;
  std::vector<qnn::Sample> train;  // encoded at the client's width
  std::vector<qnn::Sample> val;
  qsim::QuantumState summary =
      qsim::QuantumState::zero_state(1);  // data summary, padded to q_global
};

struct Federation {
  std::vector<ClientRuntime> clients;
  std::vector<qnn::Sample> test;  // encoded at q_global
  int num_classes = 0;
  int q_global = 0;
  int l_global = 0;
  Hyper hyper;  // with algorithm preset already applied
  ResolvedAlgorithm algo;
};

struct ServerState {
  qnn::PqcModel global;
  int rounds_done = 0;
  double prev_mean_val_acc = -1.0;  // <0 until the first round completes

  explicit ServerState(qnn::PqcModel initial) : global(std::move(initial)) {}
};

struct ClientRoundStats {
  int client_id = 0;
  double train_loss = 0.0;  // mean batch loss over the local steps
  double val_acc = 0.0;
  bool participated = false;
  double weight = 0.0;
};

struct RoundRecord {
  int round = 0;  // 1-based
  std::vector<ClientRoundStats> clients;
  double test_acc = 0.0;   // global model, exact readout, no noise
  double test_loss = 0.0;
  double tau = -1.0;       // threshold used; -1 when not gating
  int num_participants = 0;
  double wall_seconds = 0.0;  // informational; not serialized
};

// Exact-readout accuracy and mean cross-entropy of a model on samples.
std::pair<double, double> evaluate(const qnn::PqcModel& model,
                                   std::span<const qnn::Sample> samples,
                                   const qsim::NoiseConfig& noise);

// One communication round. Clients may train in parallel (HETQFL_THREADS
// caps the worker count); results are identical for any thread count
// because every client draws from its own derived RNG stream.
RoundRecord run_round(Federation& fed, ServerState& server,
                      std::uint64_t experiment_seed);

// Builds the federation for one (spec, algorithm, seed) triple: dataset
// synthesis or loading, the global train/test split, label-skewed client
// shards, per-client validation splits, and encoded states.
Federation setup_federation(const ExperimentSpec& spec, Algorithm algorithm,
                            std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<RoundRecord> records;
  qnn::PqcModel final_global{1, 1, 2};
};

struct ExperimentResult {
  Algorithm algorithm = Algorithm::spqfl;
  std::vector<SeedRun> runs;
  double mean_final_test_acc = 0.0;
  double std_final_test_acc = 0.0;
};

// Runs spec.hyper.rounds rounds for every seed in the spec under one
// algorithm preset. rounds = 0 yields empty record streams. The optional
// callback fires after every completed round, for streaming output.
using RoundCallback =
    std::function<void(std::uint64_t seed, const RoundRecord& record)>;
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                Algorithm algorithm,
                                const RoundCallback& on_round = {});

}  // namespace hetqfl::fed
