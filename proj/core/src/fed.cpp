#include "hetqfl/fed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

namespace hetqfl::fed {
namespace {

int env_thread_cap() {
  if (const char* env = std::getenv("HETQFL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

Eigen::VectorXd strategy_weights(const Federation& fed,
                                 const std::vector<int>& participants) {
  const auto n = static_cast<Eigen::Index>(participants.size());
  switch (fed.algo.strategy) {
    case Strategy::uniform:
    case Strategy::layerwise:
      // Depth differences are handled by the presence masks during the
      // combine step, so both strategies weight participants equally.
      return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    case Strategy::fairness: {
      std::vector<int> qubits;
      std::vector<double> phi;
      for (int i : participants) {
        qubits.push_back(fed.clients[static_cast<std::size_t>(i)].profile.num_qubits);
        phi.push_back(fed.clients[static_cast<std::size_t>(i)].profile.phi);
      }
      return fairness_weights(qubits, phi);
    }
    case Strategy::noise_aware: {
      std::vector<double> sig;
      for (int i : participants)
        sig.push_back(
            fed.clients[static_cast<std::size_t>(i)].profile.effective_sigma_sq());
      bool any_zero = false;
      for (double s : sig) any_zero |= (s == 0.0);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
      if (any_zero) {
        int zeros = 0;
        for (double s : sig) zeros += (s == 0.0);
        for (Eigen::Index j = 0; j < n; ++j)
          if (sig[static_cast<std::size_t>(j)] == 0.0) w[j] = 1.0 / zeros;
      } else {
        double total = 0.0;
        for (double s : sig) total += 1.0 / s;
        for (Eigen::Index j = 0; j < n; ++j)
          w[j] = (1.0 / sig[static_cast<std::size_t>(j)]) / total;
      }
      return w;
    }
    case Strategy::encoding_aware: {
      std::vector<qsim::QuantumState> states;
      for (int i : participants)
        states.push_back(fed.clients[static_cast<std::size_t>(i)].summary);
      // Reference: the uniform mixture of the participants' summaries.
      CMatrix ref = CMatrix::Zero(states[0].density().rows(),
                                  states[0].density().cols());
      for (const auto& s : states) ref += s.density();
      ref /= static_cast<double>(states.size());
      const auto reference = qsim::internal_access::make_mixed(
          states[0].num_qubits(), std::move(ref));
      return encoding_aware_weights(states, reference, fed.hyper.alpha);
    }
  }
  throw std::logic_error("unknown aggregation strategy");
}

struct LocalResult {
  Eigen::VectorXd params;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

LocalResult train_client(const ClientRuntime& client, const Federation& fed,
                         const Eigen::VectorXd& global_params,
                         const qnn::ParamLayout& global_layout,
                         int round_index, std::uint64_t experiment_seed) {
  const auto& profile = client.profile;
  const qnn::ParamLayout local_layout{profile.num_qubits, profile.num_layers,
                                      fed.num_classes};
  const Eigen::VectorXd anchor =
      slice_params(global_params, global_layout, local_layout);

  qnn::PqcModel model(profile.num_qubits, profile.num_layers, fed.num_classes);
  model.params() = anchor;

  qnn::TrainerState trainer;
  trainer.eta = fed.hyper.eta;
  trainer.lambda = fed.algo.lambda;
  trainer.gamma_ns = fed.algo.gamma_ns;
  trainer.global_round = round_index;
  if (fed.hyper.optimizer == OptimizerKind::adam)
    trainer.reset_adam(model.num_params());

  const auto cid = static_cast<std::uint64_t>(profile.id);
  const auto rnd = static_cast<std::uint64_t>(round_index);
  std::mt19937_64 batch_rng(
      derive_seed(experiment_seed, cid, rnd, seed_tag::batch));
  std::mt19937_64 shot_rng(
      derive_seed(experiment_seed, cid, rnd, seed_tag::shots));
  qnn::ForwardOptions options;
  options.shots = fed.hyper.shots;
  options.rng = &shot_rng;

  std::uniform_int_distribution<std::size_t> pick(0, client.train.size() - 1);
  std::vector<qnn::Sample> batch;
  double loss_sum = 0.0;
  for (int step = 0; step < fed.hyper.local_steps; ++step) {
    batch.clear();
    for (int b = 0; b < fed.hyper.batch_size; ++b)
      batch.push_back(client.train[pick(batch_rng)]);
    const auto grad = qnn::grad_parameter_shift(
        model, batch, profile.noise, fed.algo.gamma_ns, options);
    loss_sum += grad.mean_loss;
    if (fed.hyper.optimizer == OptimizerKind::sgd) {
      model.params() = qnn::local_update_spqfl(model.params(), grad, anchor,
                                               trainer);
    } else {
      model.params() = qnn::adam_step(model.params(), grad.grad, anchor,
                                      trainer, grad.weight);
    }
  }

  LocalResult result;
  result.params = model.params();
  result.train_loss = loss_sum / fed.hyper.local_steps;
  // Validation runs under the client's own noise: a decohered device
  // reports the accuracy it can actually measure.
  result.val_acc = evaluate(model, client.val, profile.noise).first;
  return result;
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::qnn_central: return "qnn_central";
    case Algorithm::qfl_fedavg: return "qfl_fedavg";
    case Algorithm::pqfl: return "pqfl";
    case Algorithm::wpqfl: return "wpqfl";
    case Algorithm::spqfl: return "spqfl";
  }
  throw std::logic_error("unknown algorithm");
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "qnn_central") return Algorithm::qnn_central;
  if (name == "qfl_fedavg") return Algorithm::qfl_fedavg;
  if (name == "pqfl") return Algorithm::pqfl;
  if (name == "wpqfl") return Algorithm::wpqfl;
  if (name == "spqfl") return Algorithm::spqfl;
  throw config_error("unknown algorithm '" + name +
                     "' (expected qnn_central, qfl_fedavg, pqfl, wpqfl, or "
                     "spqfl)");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::uniform: return "uniform";
    case Strategy::layerwise: return "layerwise";
    case Strategy::noise_aware: return "noise_aware";
    case Strategy::fairness: return "fairness";
    case Strategy::encoding_aware: return "encoding_aware";
  }
  throw std::logic_error("unknown strategy");
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "uniform") return Strategy::uniform;
  if (name == "layerwise") return Strategy::layerwise;
  if (name == "noise_aware") return Strategy::noise_aware;
  if (name == "fairness") return Strategy::fairness;
  if (name == "encoding_aware") return Strategy::encoding_aware;
  throw config_error("unknown strategy '" + name +
                     "' (expected uniform, layerwise, noise_aware, fairness, "
                     "or encoding_aware)");
}

double ClientProfile::effective_sigma_sq() const {
  return sigma_sq > 0.0 ? sigma_sq : std::max(1e-6, 1.0 - phi);
}

void ClientProfile::validate() const {
  if (num_qubits < 1)
    throw std::invalid_argument("client needs at least one qubit");
  if (num_layers < 1)
    throw std::invalid_argument("client needs at least one layer");
  if (!(phi > 0.0 && phi <= 1.0))
    throw std::invalid_argument("client phi must be in (0, 1]");
  noise.validate();
}

Eigen::VectorXd fedavg(const std::vector<Eigen::VectorXd>& params) {
  if (params.empty()) throw std::invalid_argument("fedavg needs clients");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(params[0].size());
  for (const auto& p : params) {
    if (p.size() != sum.size())
      throw std::invalid_argument("fedavg needs equally sized parameters");
    sum += p;
  }
  return sum / static_cast<double>(params.size());
}

Eigen::VectorXd layerwise_aggregate(const std::vector<Eigen::VectorXd>& params,
                                    const std::vector<int>& depths,
                                    int num_qubits, int num_classes) {
  if (params.empty()) throw std::invalid_argument("aggregation needs clients");
  if (params.size() != depths.size())
    throw std::invalid_argument("one depth per parameter vector required");
  const int l_max = *std::max_element(depths.begin(), depths.end());
  const qnn::ParamLayout out_layout{num_qubits, l_max, num_classes};

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(out_layout.size());
  Eigen::VectorXd count = Eigen::VectorXd::Zero(out_layout.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const qnn::ParamLayout in_layout{num_qubits, depths[i], num_classes};
    if (params[i].size() != in_layout.size())
      throw std::invalid_argument("parameter vector does not match its depth");
    // Angle blocks are layer-major, so a shallower model's circuit block
    // is a prefix of the deeper layout; the head maps to the tail.
    const Eigen::Index circuit = in_layout.circuit_size();
    sum.head(circuit) += params[i].head(circuit);
    count.head(circuit).array() += 1.0;
    const Eigen::Index head = in_layout.size() - circuit;
    sum.tail(head) += params[i].tail(head);
    count.tail(head).array() += 1.0;
  }
  for (Eigen::Index j = 0; j < sum.size(); ++j) sum[j] /= count[j];
  return sum;
}

Eigen::VectorXd encoding_aware_weights(
    const std::vector<qsim::QuantumState>& states,
    const qsim::QuantumState& reference, double alpha) {
  if (states.empty()) throw std::invalid_argument("weights need clients");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  Eigen::VectorXd w(static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i)
    w[static_cast<Eigen::Index>(i)] =
        std::exp(-alpha * qsim::trace_distance(states[i], reference));
  return w / w.sum();
}

Eigen::VectorXd fairness_weights(const std::vector<int>& num_qubits,
                                 const std::vector<double>& phi) {
  if (num_qubits.empty() || num_qubits.size() != phi.size())
    throw std::invalid_argument("need one (qubits, phi) pair per client");
  Eigen::VectorXd w(static_cast<Eigen::Index>(num_qubits.size()));
  for (std::size_t i = 0; i < num_qubits.size(); ++i) {
    if (num_qubits[i] < 1)
      throw std::invalid_argument("qubit counts must be positive");
    if (!(phi[i] > 0.0 && phi[i] <= 1.0))
      throw std::invalid_argument("phi must be in (0, 1]");
    w[static_cast<Eigen::Index>(i)] = num_qubits[i] * phi[i];
  }
  return w / w.sum();
}

Eigen::VectorXd noise_aware_aggregate(const std::vector<Eigen::VectorXd>& params,
                                      const std::vector<double>& sigma_sq) {
  if (params.empty()) throw std::invalid_argument("aggregation needs clients");
  if (params.size() != sigma_sq.size())
    throw std::invalid_argument("one variance per parameter vector required");
  for (double s : sigma_sq)
    if (!(s >= 0.0)) throw std::invalid_argument("variances must be >= 0");

  bool any_zero = false;
  for (double s : sigma_sq) any_zero |= (s == 0.0);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(params[0].size());
  if (any_zero) {
    // Zero variance dominates in the limit, so average only those clients.
    int zeros = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (sigma_sq[i] != 0.0) continue;
      if (params[i].size() != out.size())
        throw std::invalid_argument("parameter sizes differ");
      out += params[i];
      ++zeros;
    }
    return out / static_cast<double>(zeros);
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != out.size())
      throw std::invalid_argument("parameter sizes differ");
    out += params[i] / sigma_sq[i];
    denom += 1.0 / sigma_sq[i];
  }
  return out / denom;
}

std::vector<int> sporadic_select(const std::vector<double>& accuracies,
                                 double tau) {
  std::vector<int> selected;
  for (std::size_t i = 0; i < accuracies.size(); ++i)
    if (accuracies[i] >= tau) selected.push_back(static_cast<int>(i));
  return selected;
}

PaddedParams pad_params(const Eigen::VectorXd& params,
                        const qnn::ParamLayout& from,
                        const qnn::ParamLayout& to) {
  if (from.num_classes != to.num_classes)
    throw std::invalid_argument("class counts must match");
  if (from.num_qubits > to.num_qubits || from.num_layers > to.num_layers)
    throw std::invalid_argument("cannot pad into a smaller layout");
  if (params.size() != from.size())
    throw std::invalid_argument("parameter vector does not match its layout");

  PaddedParams out;
  out.values = Eigen::VectorXd::Zero(to.size());
  out.mask = Eigen::VectorXd::Zero(to.size());
  for (int l = 0; l < from.num_layers; ++l)
    for (int qb = 0; qb < from.num_qubits; ++qb)
      for (int ax = 0; ax < 3; ++ax) {
        out.values[to.angle(l, qb, ax)] = params[from.angle(l, qb, ax)];
        out.mask[to.angle(l, qb, ax)] = 1.0;
      }
  for (int c = 0; c < from.num_classes; ++c) {
    for (int qb = 0; qb < from.num_qubits; ++qb) {
      out.values[to.head_weight(c, qb)] = params[from.head_weight(c, qb)];
      out.mask[to.head_weight(c, qb)] = 1.0;
    }
    out.values[to.head_bias(c)] = params[from.head_bias(c)];
    out.mask[to.head_bias(c)] = 1.0;
  }
  return out;
}

Eigen::VectorXd slice_params(const Eigen::VectorXd& global,
                             const qnn::ParamLayout& from,
                             const qnn::ParamLayout& to) {
  if (from.num_classes != to.num_classes)
    throw std::invalid_argument("class counts must match");
  if (to.num_qubits > from.num_qubits || to.num_layers > from.num_layers)
    throw std::invalid_argument("cannot slice into a larger layout");
  if (global.size() != from.size())
    throw std::invalid_argument("parameter vector does not match its layout");

  Eigen::VectorXd out(to.size());
  for (int l = 0; l < to.num_layers; ++l)
    for (int qb = 0; qb < to.num_qubits; ++qb)
      for (int ax = 0; ax < 3; ++ax)
        out[to.angle(l, qb, ax)] = global[from.angle(l, qb, ax)];
  for (int c = 0; c < to.num_classes; ++c) {
    for (int qb = 0; qb < to.num_qubits; ++qb)
      out[to.head_weight(c, qb)] = global[from.head_weight(c, qb)];
    out[to.head_bias(c)] = global[from.head_bias(c)];
  }
  return out;
}

ResolvedAlgorithm resolve_algorithm(Algorithm algorithm, const Hyper& hyper) {
  ResolvedAlgorithm r;
  r.algorithm = algorithm;
  switch (algorithm) {
    case Algorithm::qnn_central:
    case Algorithm::qfl_fedavg:
      r.strategy = Strategy::uniform;
      break;
    case Algorithm::pqfl:
      r.lambda = hyper.lambda;
      r.strategy = Strategy::uniform;
      break;
    case Algorithm::wpqfl:
      r.lambda = hyper.lambda;
      r.strategy =
          hyper.strategy_explicit ? hyper.strategy : Strategy::fairness;
      break;
    case Algorithm::spqfl:
      r.lambda = hyper.lambda;
      r.gamma_ns = hyper.gamma_ns;
      r.gate_participation = hyper.tau.mode != TauPolicy::Mode::disabled;
      r.strategy = hyper.strategy;
      break;
  }
  return r;
}

std::pair<double, double> evaluate(const qnn::PqcModel& model,
                                   std::span<const qnn::Sample> samples,
                                   const qsim::NoiseConfig& noise) {
  if (samples.empty()) throw std::invalid_argument("evaluation needs samples");
  int correct = 0;
  double loss = 0.0;
  for (const auto& sample : samples) {
    const auto result = qnn::forward(model, sample.state, noise);
    Eigen::Index top = 0;
    result.logits.maxCoeff(&top);
    correct += (static_cast<int>(top) == sample.label);
    loss += qnn::loss_ce(result.logits, sample.label);
  }
  const double n = static_cast<double>(samples.size());
  return {correct / n, loss / n};
}

RoundRecord run_round(Federation& fed, ServerState& server,
                      std::uint64_t experiment_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const int round_index = server.rounds_done;
  const int n = static_cast<int>(fed.clients.size());
  const qnn::ParamLayout global_layout = server.global.layout();
  const Eigen::VectorXd global_params = server.global.params();

  // Local training, striped across workers. Each client owns a derived
  // RNG stream, so the outcome does not depend on the thread count.
  std::vector<LocalResult> results(static_cast<std::size_t>(n));
  const int workers = std::clamp(env_thread_cap(), 1, n);
  auto train_range = [&](int worker) {
    for (int i = worker; i < n; i += workers)
      results[static_cast<std::size_t>(i)] =
          train_client(fed.clients[static_cast<std::size_t>(i)], fed,
                       global_params, global_layout, round_index,
                       experiment_seed);
  };
  if (workers == 1) {
    train_range(0);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          train_range(w);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<double> accuracies;
  accuracies.reserve(static_cast<std::size_t>(n));
  for (const auto& r : results) accuracies.push_back(r.val_acc);

  RoundRecord record;
  record.round = round_index + 1;

  // Participation gate.
  std::vector<int> participants(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) participants[static_cast<std::size_t>(i)] = i;
  if (fed.algo.gate_participation) {
    double tau = kTauFloor;
    if (fed.hyper.tau.mode == TauPolicy::Mode::fixed) {
      tau = fed.hyper.tau.fixed_value;
    } else if (server.prev_mean_val_acc >= 0.0) {
      tau = std::clamp(kTauScale * server.prev_mean_val_acc, kTauFloor,
                       kTauCeil);
    }
    record.tau = tau;
    participants = sporadic_select(accuracies, tau);
  }
  record.num_participants = static_cast<int>(participants.size());

  // Weighted, mask-aware combine. An empty participant set leaves the
  // global model unchanged.
  Eigen::VectorXd weights;
  if (!participants.empty()) {
    weights = strategy_weights(fed, participants);
    Eigen::VectorXd numer = Eigen::VectorXd::Zero(global_layout.size());
    Eigen::VectorXd denom = Eigen::VectorXd::Zero(global_layout.size());
    for (std::size_t j = 0; j < participants.size(); ++j) {
      const int i = participants[j];
      const auto& profile = fed.clients[static_cast<std::size_t>(i)].profile;
      const qnn::ParamLayout local_layout{profile.num_qubits,
                                          profile.num_layers, fed.num_classes};
      const auto padded = pad_params(results[static_cast<std::size_t>(i)].params,
                                     local_layout, global_layout);
      const double w = weights[static_cast<Eigen::Index>(j)];
      numer += w * padded.values;
      denom += w * padded.mask;
    }
    Eigen::VectorXd updated = server.global.params();
    for (Eigen::Index k = 0; k < updated.size(); ++k)
      if (denom[k] > 0.0) updated[k] = numer[k] / denom[k];
    server.global.params() = updated;
  }

  server.rounds_done = round_index + 1;
  double acc_sum = 0.0;
  for (double a : accuracies) acc_sum += a;
  server.prev_mean_val_acc = acc_sum / n;

  const auto [test_acc, test_loss] =
      evaluate(server.global, fed.test, qsim::NoiseConfig{});
  record.test_acc = test_acc;
  record.test_loss = test_loss;

  record.clients.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& c = record.clients[static_cast<std::size_t>(i)];
    c.client_id = fed.clients[static_cast<std::size_t>(i)].profile.id;
    c.train_loss = results[static_cast<std::size_t>(i)].train_loss;
    c.val_acc = results[static_cast<std::size_t>(i)].val_acc;
  }
  for (std::size_t j = 0; j < participants.size(); ++j) {
    auto& c = record.clients[static_cast<std::size_t>(participants[j])];
    c.participated = true;
    c.weight = weights[static_cast<Eigen::Index>(j)];
  }

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return record;
}

void ExperimentSpec::validate() const {
  if (num_clients < 1) throw config_error("clients.count must be >= 1");
  if (clients.size() != static_cast<std::size_t>(num_clients))
    throw config_error("resolved client profiles must match clients.count");
  for (int i = 0; i < num_clients; ++i) {
    const auto& c = clients[static_cast<std::size_t>(i)];
    if (c.id != i) throw config_error("client ids must be 0..count-1");
    try {
      c.validate();
    } catch (const std::exception& e) {
      throw config_error("client " + std::to_string(i) + ": " + e.what());
    }
  }
  if (classes_per_client < 1)
    throw config_error("clients.classes_per_client must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw config_error("train_fraction must be in (0, 1)");
  if (hyper.rounds < 0) throw config_error("training.rounds must be >= 0");
  if (hyper.local_steps < 1)
    throw config_error("training.local_steps must be >= 1");
  if (hyper.batch_size < 1)
    throw config_error("training.batch_size must be >= 1");
  if (!(hyper.eta > 0.0)) throw config_error("training.eta must be > 0");
  if (!(hyper.lambda >= 0.0))
    throw config_error("training.lambda must be >= 0");
  if (!(hyper.gamma_ns >= 0.0))
    throw config_error("training.gamma_ns must be >= 0");
  if (!(hyper.alpha >= 0.0)) throw config_error("aggregation.alpha must be >= 0");
  if (hyper.shots < 0) throw config_error("training.shots must be >= 0");
  if (hyper.tau.mode == TauPolicy::Mode::fixed &&
      !(hyper.tau.fixed_value >= 0.0 && hyper.tau.fixed_value <= 1.0))
    throw config_error("aggregation.tau must be in [0, 1]");
  if (seeds.empty()) throw config_error("seeds must not be empty");
  if (dataset.source == DataSpec::Source::blobs) {
    if (dataset.blob_n < 1 || dataset.blob_classes < 2 || dataset.blob_dim < 1)
      throw config_error("dataset.blobs needs n >= 1, classes >= 2, dim >= 1");
    if (!(dataset.blob_spread >= 0.0))
      throw config_error("dataset.spread must be >= 0");
  }
  if (dataset.subsample < 0) throw config_error("dataset.subsample must be >= 0");
  if (dataset.reduce_dim < 0) throw config_error("dataset.reduce.dim must be >= 0");
}

namespace {

data::Dataset build_dataset(const DataSpec& spec, std::uint64_t seed) {
  switch (spec.source) {
    case DataSpec::Source::blobs:
      return data::synth_blobs(spec.blob_n, spec.blob_classes, spec.blob_dim,
                               spec.blob_spread,
                               derive_seed(seed, 0, 0, seed_tag::data));
    case DataSpec::Source::idx:
      return data::load_idx(spec.images_path, spec.labels_path);
    case DataSpec::Source::csv:
      return data::load_csv(spec.csv_path);
  }
  throw std::logic_error("unknown dataset source");
}

// Feature width a client of the given qubit count can load.
Eigen::Index encoder_capacity(encode::EncoderKind kind, int num_qubits) {
  return kind == encode::EncoderKind::amplitude
             ? (Eigen::Index{1} << num_qubits)
             : Eigen::Index{num_qubits};
}

std::vector<qnn::Sample> encode_rows(const data::Dataset& ds,
                                     const encode::Encoder& encoder,
                                     Eigen::Index width) {
  std::vector<qnn::Sample> out;
  out.reserve(static_cast<std::size_t>(ds.size()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const Eigen::VectorXd row = ds.features.row(i).head(width);
    out.push_back({encoder.encode(row), ds.labels[static_cast<std::size_t>(i)]});
  }
  return out;
}

}  // namespace

Federation setup_federation(const ExperimentSpec& spec, Algorithm algorithm,
                            std::uint64_t seed) {
  spec.validate();

  data::Dataset full = build_dataset(spec.dataset, seed);
  if (spec.dataset.subsample > 0 && spec.dataset.subsample < full.size()) {
    std::mt19937_64 rng(derive_seed(seed, 0, 1, seed_tag::data));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(full.size()));
    for (Eigen::Index i = 0; i < full.size(); ++i)
      idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(spec.dataset.subsample));
    std::sort(idx.begin(), idx.end());
    full = data::subset(full, idx);
  }

  auto [train, test] = data::split_train_test(
      full, spec.train_fraction, derive_seed(seed, 0, 2, seed_tag::data));
  if (spec.dataset.reduce_dim > 0) {
    const auto reducer = data::DimReducer::fit(train, spec.dataset.reduce_dim,
                                               spec.dataset.reduce_method);
    train = reducer.apply(train);
    test = reducer.apply(test);
  }

  Federation fed;
  fed.num_classes = full.num_classes;
  fed.hyper = spec.hyper;
  fed.algo = resolve_algorithm(algorithm, spec.hyper);

  // The central baseline trains one ideal full-width client on all data.
  std::vector<ClientProfile> profiles = spec.clients;
  if (algorithm == Algorithm::qnn_central) {
    ClientProfile central;
    central.id = 0;
    central.num_qubits = 0;
    central.num_layers = 0;
    for (const auto& c : spec.clients) {
      central.num_qubits = std::max(central.num_qubits, c.num_qubits);
      central.num_layers = std::max(central.num_layers, c.num_layers);
    }
    profiles = {central};
  }

  fed.q_global = 0;
  fed.l_global = 0;
  for (const auto& c : profiles) {
    fed.q_global = std::max(fed.q_global, c.num_qubits);
    fed.l_global = std::max(fed.l_global, c.num_layers);
  }

  std::vector<std::vector<Eigen::Index>> shards;
  if (profiles.size() == 1) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(train.size()));
    for (Eigen::Index i = 0; i < train.size(); ++i)
      all[static_cast<std::size_t>(i)] = i;
    shards.push_back(std::move(all));
  } else {
    shards = data::partition_noniid(train, static_cast<int>(profiles.size()),
                                    spec.classes_per_client,
                                    derive_seed(seed, 0, 3, seed_tag::data))
                 .assignment;
  }

  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& profile = profiles[i];
    ClientRuntime client;
    client.profile = profile;

    const data::Dataset shard = data::subset(train, shards[i]);
    auto [local_train, local_val] = data::split_train_test(
        shard, spec.train_fraction,
        derive_seed(seed, static_cast<std::uint64_t>(profile.id) + 1, 0,
                    seed_tag::data));

    // A narrow device loads as much of the feature vector as fits.
    const Eigen::Index width = std::min(
        train.dim(), encoder_capacity(spec.encoder, profile.num_qubits));
    encode::Encoder encoder(spec.encoder, profile.num_qubits,
                            spec.normalization);
    encoder.fit(local_train.features.leftCols(width));
    client.train = encode_rows(local_train, encoder, width);
    client.val = encode_rows(local_val, encoder, width);
    client.summary = encode::pad_to_qubits(
        encode::client_state_summary(local_train.features.leftCols(width),
                                     encoder),
        fed.q_global);
    fed.clients.push_back(std::move(client));
  }

  const Eigen::Index test_width =
      std::min(train.dim(), encoder_capacity(spec.encoder, fed.q_global));
  encode::Encoder test_encoder(spec.encoder, fed.q_global, spec.normalization);
  test_encoder.fit(train.features.leftCols(test_width));
  fed.test = encode_rows(test, test_encoder, test_width);
  return fed;
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                Algorithm algorithm,
                                const RoundCallback& on_round) {
  spec.validate();
  ExperimentResult result;
  result.algorithm = algorithm;

  std::vector<double> finals;
  for (const std::uint64_t seed : spec.seeds) {
    Federation fed = setup_federation(spec, algorithm, seed);
    ServerState server(qnn::build_pqc(fed.q_global, fed.l_global,
                                      derive_seed(seed, 0, 4, seed_tag::init),
                                      fed.num_classes));
    SeedRun run;
    run.seed = seed;
    for (int k = 0; k < spec.hyper.rounds; ++k) {
      run.records.push_back(run_round(fed, server, seed));
      if (on_round) on_round(seed, run.records.back());
    }
    run.final_global = server.global;
    finals.push_back(run.records.empty()
                         ? evaluate(server.global, fed.test,
                                    qsim::NoiseConfig{})
                               .first
                         : run.records.back().test_acc);
    result.runs.push_back(std::move(run));
  }

  double mean = 0.0;
  for (double f : finals) mean += f;
  mean /= static_cast<double>(finals.size());
  double var = 0.0;
  for (double f : finals) var += (f - mean) * (f - mean);
  var /= static_cast<double>(finals.size());
  result.mean_final_test_acc = mean;
  result.std_final_test_acc = std::sqrt(var);
  return result;
}

}  // namespace hetqfl::fed
