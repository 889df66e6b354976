#include "hetqfl/qnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace hetqfl::qnn {
namespace {

constexpr char kMagic[4] = {'H', 'Q', 'F', 'L'};
constexpr std::uint32_t kVersion = 1;

void check_shape(int num_qubits, int num_layers, int num_classes) {
  if (num_qubits < 1) throw std::invalid_argument("need at least one qubit");
  if (num_layers < 1) throw std::invalid_argument("need at least one layer");
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
}

// Executes circuit evaluations under one noise setting. Noise channels
// for the two gate durations are precomputed as superoperators; each
// executed gate is followed by the channel acting on every qubit it
// touched. Reused across the many parameter-shift evaluations of a
// gradient pass.
struct CircuitRunner {
  bool noisy;
  qsim::ChannelSuperop noise_1q;
  qsim::ChannelSuperop noise_2q;

  explicit CircuitRunner(const qsim::NoiseConfig& noise)
      : noisy(noise.enabled) {
    if (noisy) {
      noise_1q = qsim::ChannelSuperop::from_channels(
          noise.channels_for(noise.gate_time_1q_ns));
      noise_2q = qsim::ChannelSuperop::from_channels(
          noise.channels_for(noise.gate_time_2q_ns));
    }
  }

  Eigen::VectorXd run(const PqcModel& model, const qsim::QuantumState& input,
                      const ForwardOptions& options) const {
    qsim::QuantumState state =
        noisy ? qsim::to_density(input) : input;
    const int q = model.num_qubits();
    CMatrix* rho = state.is_mixed() ? &state.mutable_density() : nullptr;
    for (int layer = 0; layer < model.num_layers(); ++layer) {
      for (int qb = 0; qb < q; ++qb) {
        for (int axis = 0; axis < 3; ++axis) {
          const double angle = model.angle(layer, qb, axis);
          if (angle == 0.0) continue;  // pruned or unused gate
          const auto gate = axis == 0   ? qsim::Gate::rx(angle, qb)
                            : axis == 1 ? qsim::Gate::ry(angle, qb)
                                        : qsim::Gate::rz(angle, qb);
          qsim::apply_gate_inplace(state, gate);
          if (noisy) noise_1q.apply_inplace(*rho, q, qb);
        }
      }
      if (q >= 2) {
        for (int qb = 0; qb < q; ++qb) {
          const int other = (qb + 1) % q;
          qsim::apply_gate_inplace(state, qsim::Gate::cnot(qb, other));
          if (noisy) {
            noise_2q.apply_inplace(*rho, q, qb);
            noise_2q.apply_inplace(*rho, q, other);
          }
        }
      }
    }
    Eigen::VectorXd expectations(q);
    for (int qb = 0; qb < q; ++qb) {
      expectations[qb] =
          options.shots > 0
              ? qsim::sampled_expectation_z(state, qb, options.shots,
                                            *options.rng)
              : qsim::expectation_z(state, qb);
    }
    return expectations;
  }
};

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n,
                const std::string& path) {
  if (!in.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
    throw std::runtime_error(path + ": truncated checkpoint");
}

}  // namespace

PqcModel::PqcModel(int num_qubits, int num_layers, int num_classes)
    : num_qubits_(num_qubits),
      num_layers_(num_layers),
      num_classes_(num_classes) {
  check_shape(num_qubits, num_layers, num_classes);
  params_ = Eigen::VectorXd::Zero(num_circuit_params() +
                                  Eigen::Index{num_classes} * num_qubits +
                                  num_classes);
}

Eigen::Index PqcModel::angle_index(int layer, int qubit, int axis) const {
  if (layer < 0 || layer >= num_layers_ || qubit < 0 || qubit >= num_qubits_ ||
      axis < 0 || axis > 2)
    throw std::out_of_range("angle index out of range");
  return layout().angle(layer, qubit, axis);
}

double PqcModel::angle(int layer, int qubit, int axis) const {
  return params_[angle_index(layer, qubit, axis)];
}

void PqcModel::set_angle(int layer, int qubit, int axis, double value) {
  params_[angle_index(layer, qubit, axis)] = value;
}

double PqcModel::head_weight(int cls, int qubit) const {
  if (cls < 0 || cls >= num_classes_ || qubit < 0 || qubit >= num_qubits_)
    throw std::out_of_range("head weight index out of range");
  return params_[layout().head_weight(cls, qubit)];
}

void PqcModel::set_head_weight(int cls, int qubit, double value) {
  if (cls < 0 || cls >= num_classes_ || qubit < 0 || qubit >= num_qubits_)
    throw std::out_of_range("head weight index out of range");
  params_[layout().head_weight(cls, qubit)] = value;
}

double PqcModel::head_bias(int cls) const {
  if (cls < 0 || cls >= num_classes_)
    throw std::out_of_range("head bias index out of range");
  return params_[layout().head_bias(cls)];
}

void PqcModel::set_head_bias(int cls, double value) {
  if (cls < 0 || cls >= num_classes_)
    throw std::out_of_range("head bias index out of range");
  params_[layout().head_bias(cls)] = value;
}

std::vector<qsim::Gate> PqcModel::circuit_gates() const {
  std::vector<qsim::Gate> gates;
  for (int layer = 0; layer < num_layers_; ++layer) {
    for (int qb = 0; qb < num_qubits_; ++qb) {
      const double ax = angle(layer, qb, 0);
      const double ay = angle(layer, qb, 1);
      const double az = angle(layer, qb, 2);
      if (ax != 0.0) gates.push_back(qsim::Gate::rx(ax, qb));
      if (ay != 0.0) gates.push_back(qsim::Gate::ry(ay, qb));
      if (az != 0.0) gates.push_back(qsim::Gate::rz(az, qb));
    }
    if (num_qubits_ >= 2)
      for (int qb = 0; qb < num_qubits_; ++qb)
        gates.push_back(qsim::Gate::cnot(qb, (qb + 1) % num_qubits_));
  }
  return gates;
}

PqcModel build_pqc(int num_qubits, int num_layers, std::uint64_t seed,
                   int num_classes) {
  PqcModel model(num_qubits, num_layers, num_classes);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi,
                                               std::numbers::pi);
  for (Eigen::Index i = 0; i < model.num_circuit_params(); ++i)
    model.params()[i] = angle(rng);
  return model;
}

Eigen::VectorXd decode(const PqcModel& model,
                       const Eigen::VectorXd& expectations) {
  if (expectations.size() != model.num_qubits())
    throw std::invalid_argument("expected one <Z> per qubit");
  Eigen::VectorXd logits(model.num_classes());
  for (int c = 0; c < model.num_classes(); ++c) {
    double z = model.head_bias(c);
    for (int qb = 0; qb < model.num_qubits(); ++qb)
      z += model.head_weight(c, qb) * expectations[qb];
    logits[c] = z;
  }
  return logits;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double loss_ce(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::out_of_range("label outside logit range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits[label];
}

ForwardResult forward(const PqcModel& model, const qsim::QuantumState& input,
                      const qsim::NoiseConfig& noise,
                      const ForwardOptions& options) {
  if (input.num_qubits() != model.num_qubits())
    throw std::invalid_argument("input state size differs from model");
  if (options.shots > 0 && options.rng == nullptr)
    throw std::invalid_argument("sampled readout needs an rng");
  CircuitRunner runner(noise);
  ForwardResult result;
  result.expectations = runner.run(model, input, options);
  result.logits = decode(model, result.expectations);
  return result;
}

namespace {

// One full gradient pass over the batch. Returns the mean gradient and
// the mean loss at the unshifted parameters.
std::pair<Eigen::VectorXd, double> gradient_pass(
    const PqcModel& model, std::span<const Sample> batch,
    const qsim::NoiseConfig& noise, const ForwardOptions& options) {
  const int q = model.num_qubits();
  const int C = model.num_classes();
  const Eigen::Index P = model.num_circuit_params();
  constexpr double half_pi = std::numbers::pi / 2.0;

  PqcModel shifted = model;
  CircuitRunner runner(noise);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.num_params());
  double loss_sum = 0.0;

  for (const Sample& sample : batch) {
    if (sample.state.num_qubits() != q)
      throw std::invalid_argument("sample state size differs from model");
    const Eigen::VectorXd e = runner.run(model, sample.state, options);
    const Eigen::VectorXd logits = decode(model, e);
    const Eigen::VectorXd p = softmax(logits);
    loss_sum += loss_ce(logits, sample.label);

    // d loss / d logits, then the analytic head derivatives.
    Eigen::VectorXd dz = p;
    dz[sample.label] -= 1.0;
    Eigen::VectorXd de = Eigen::VectorXd::Zero(q);
    for (int c = 0; c < C; ++c) {
      for (int qb = 0; qb < q; ++qb) {
        grad[P + Eigen::Index{c} * q + qb] += dz[c] * e[qb];
        de[qb] += dz[c] * model.head_weight(c, qb);
      }
      grad[model.num_params() - C + c] += dz[c];
    }

    // Parameter-shift rule for every rotation angle: the derivative of
    // each <Z_j> is (f(theta + pi/2) - f(theta - pi/2)) / 2.
    for (Eigen::Index pi = 0; pi < P; ++pi) {
      const double original = shifted.params()[pi];
      shifted.params()[pi] = original + half_pi;
      const Eigen::VectorXd e_plus = runner.run(shifted, sample.state, options);
      shifted.params()[pi] = original - half_pi;
      const Eigen::VectorXd e_minus = runner.run(shifted, sample.state, options);
      shifted.params()[pi] = original;
      grad[pi] += 0.5 * de.dot(e_plus - e_minus);
    }
  }
  grad /= static_cast<double>(batch.size());
  return {std::move(grad), loss_sum / static_cast<double>(batch.size())};
}

}  // namespace

GradientSample grad_parameter_shift(const PqcModel& model,
                                    std::span<const Sample> batch,
                                    const qsim::NoiseConfig& noise,
                                    double gamma_ns,
                                    const ForwardOptions& options) {
  if (batch.empty()) throw std::invalid_argument("gradient needs a batch");
  GradientSample out;
  if (options.shots > 0) {
    // Two independent shot-noise realizations; their disagreement is the
    // corruption estimate and their mean is the usable gradient.
    auto [g1, loss1] = gradient_pass(model, batch, noise, options);
    auto [g2, loss2] = gradient_pass(model, batch, noise, options);
    out.grad = 0.5 * (g1 + g2);
    out.mean_loss = 0.5 * (loss1 + loss2);
    out.xi_norm = (g1 - g2).norm();
  } else {
    auto [g, loss] = gradient_pass(model, batch, noise, options);
    out.grad = std::move(g);
    out.mean_loss = loss;
    out.xi_norm = noise.enabled ? noise.gamma_ad + noise.p_pd : 0.0;
  }
  out.weight = std::exp(-gamma_ns * out.xi_norm);
  return out;
}

double TrainerState::effective_lr() const {
  const int steps = lr_decay_interval > 0 ? global_round / lr_decay_interval : 0;
  return eta * std::pow(lr_decay, steps);
}

void TrainerState::reset_adam(Eigen::Index num_params) {
  adam_m = Eigen::VectorXd::Zero(num_params);
  adam_v = Eigen::VectorXd::Zero(num_params);
  adam_steps = 0;
}

Eigen::VectorXd local_update_spqfl(const Eigen::VectorXd& omega,
                                   const GradientSample& grad,
                                   const Eigen::VectorXd& omega_global,
                                   const TrainerState& trainer) {
  if (omega.size() != grad.grad.size() || omega.size() != omega_global.size())
    throw std::invalid_argument("parameter vector sizes differ");
  return omega - trainer.eta * grad.weight *
                     (grad.grad + trainer.lambda * (omega - omega_global));
}

Eigen::VectorXd adam_step(const Eigen::VectorXd& omega,
                          const Eigen::VectorXd& grad,
                          const Eigen::VectorXd& omega_global,
                          TrainerState& trainer, double step_scale) {
  if (omega.size() != grad.size() || omega.size() != omega_global.size())
    throw std::invalid_argument("parameter vector sizes differ");
  if (trainer.adam_m.size() != omega.size()) trainer.reset_adam(omega.size());

  const Eigen::VectorXd g =
      grad + trainer.lambda * (omega - omega_global);
  trainer.adam_m = trainer.beta1 * trainer.adam_m + (1.0 - trainer.beta1) * g;
  trainer.adam_v =
      trainer.beta2 * trainer.adam_v + (1.0 - trainer.beta2) * g.cwiseProduct(g);
  ++trainer.adam_steps;
  const double bc1 = 1.0 - std::pow(trainer.beta1, trainer.adam_steps);
  const double bc2 = 1.0 - std::pow(trainer.beta2, trainer.adam_steps);
  const double lr = trainer.effective_lr() * step_scale;
  return omega - lr * ((trainer.adam_m / bc1).array() /
                       ((trainer.adam_v / bc2).array().sqrt() + trainer.epsilon))
                         .matrix();
}

PqcModel prune_gates(const PqcModel& model, double epsilon) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  PqcModel out = model;
  for (Eigen::Index i = 0; i < out.num_circuit_params(); ++i)
    if (std::abs(out.params()[i]) < epsilon) out.params()[i] = 0.0;
  return out;
}

void save_model(const PqcModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_bytes(out, kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  write_bytes(out, &version, sizeof(version));
  const std::int32_t shape[3] = {model.num_qubits(), model.num_layers(),
                                 model.num_classes()};
  write_bytes(out, shape, sizeof(shape));
  write_bytes(out, model.params().data(),
              sizeof(double) * static_cast<std::size_t>(model.num_params()));
  if (!out) throw std::runtime_error("failed while writing " + path);
}

PqcModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  read_bytes(in, magic, sizeof(magic), path);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + ": not a model checkpoint");
  std::uint32_t version = 0;
  read_bytes(in, &version, sizeof(version), path);
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  std::int32_t shape[3];
  read_bytes(in, shape, sizeof(shape), path);
  if (shape[0] < 1 || shape[1] < 1 || shape[2] < 2)
    throw std::runtime_error(path + ": corrupt checkpoint shape");
  PqcModel model(shape[0], shape[1], shape[2]);
  read_bytes(in, model.params().data(),
             sizeof(double) * static_cast<std::size_t>(model.num_params()),
             path);
  return model;
}

}  // namespace hetqfl::qnn
