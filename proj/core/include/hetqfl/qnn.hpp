#pragma once

// Variational circuit model and its training machinery. The ansatz is L
// layers of per-qubit RX, RY, RZ rotations followed by a CNOT ring, read
// out as per-qubit Z expectations that feed a linear classification head.
// Gradients of the circuit angles come from the exact parameter-shift
// rule; the head is differentiated analytically.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hetqfl/common.hpp"
#include "hetqfl/qsim.hpp"

namespace hetqfl::qnn {

// Flat parameter layout:
//   [0, L*q*3)            rotation angles, (layer, qubit, axis) row-major,
//                         axis 0 = RX, 1 = RY, 2 = RZ
//   [L*q*3, L*q*3 + C*q)  head weights, (class, qubit) row-major
//   last C entries        head biases
// Keeping everything in one vector makes aggregation and the anchored
// update rule plain vector arithmetic.
struct ParamLayout {
  int num_qubits = 0;
  int num_layers = 0;
  int num_classes = 0;

  Eigen::Index circuit_size() const {
    return Eigen::Index{3} * num_layers * num_qubits;
  }
  Eigen::Index size() const {
    return circuit_size() + Eigen::Index{num_classes} * num_qubits +
           num_classes;
  }
  Eigen::Index angle(int layer, int qubit, int axis) const {
    return (Eigen::Index{layer} * num_qubits + qubit) * 3 + axis;
  }
  Eigen::Index head_weight(int cls, int qubit) const {
    return circuit_size() + Eigen::Index{cls} * num_qubits + qubit;
  }
  Eigen::Index head_bias(int cls) const {
    return size() - num_classes + cls;
  }
  bool operator==(const ParamLayout&) const = default;
};

class PqcModel {
 public:
  PqcModel(int num_qubits, int num_layers, int num_classes);

  int num_qubits() const { return num_qubits_; }
  int num_layers() const { return num_layers_; }
  int num_classes() const { return num_classes_; }

  ParamLayout layout() const {
    return {num_qubits_, num_layers_, num_classes_};
  }
  Eigen::Index num_circuit_params() const { return layout().circuit_size(); }
  Eigen::Index num_params() const { return params_.size(); }

  double angle(int layer, int qubit, int axis) const;
  void set_angle(int layer, int qubit, int axis, double value);
  double head_weight(int cls, int qubit) const;
  void set_head_weight(int cls, int qubit, double value);
  double head_bias(int cls) const;
  void set_head_bias(int cls, double value);

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  // Angle index into the flat vector.
  Eigen::Index angle_index(int layer, int qubit, int axis) const;

  // The circuit as an explicit gate list. Rotations with angle exactly
  // 0.0 are elided, which is also how pruned gates are skipped during
  // execution; RX(0) = RY(0) = RZ(0) = I so the state is unaffected.
  std::vector<qsim::Gate> circuit_gates() const;

 private:
  int num_qubits_;
  int num_layers_;
  int num_classes_;
  Eigen::VectorXd params_;
};

// Random initial model: angles uniform in [-pi, pi] drawn from the given
// seed, head weights and biases at zero.
PqcModel build_pqc(int num_qubits, int num_layers, std::uint64_t seed,
                   int num_classes = 2);

struct ForwardOptions {
  int shots = 0;                    // 0 = exact expectations
  std::mt19937_64* rng = nullptr;   // required when shots > 0
};

struct ForwardResult {
  Eigen::VectorXd expectations;  // per-qubit <Z>
  Eigen::VectorXd logits;        // head output, one per class
};

// Runs the circuit on the input state and reads out logits. With noise
// disabled a pure input stays a statevector; with noise enabled the state
// is evolved as a density matrix and the configured channels act on every
// qubit touched by each executed gate.
ForwardResult forward(const PqcModel& model, const qsim::QuantumState& input,
                      const qsim::NoiseConfig& noise,
                      const ForwardOptions& options = {});

Eigen::VectorXd decode(const PqcModel& model,
                       const Eigen::VectorXd& expectations);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double loss_ce(const Eigen::VectorXd& logits, int label);

struct Sample {
  qsim::QuantumState state;
  int label = 0;
};

// Gradient of the mean cross-entropy over a batch, plus the noise proxy
// that scales update steps.
struct GradientSample {
  Eigen::VectorXd grad;
  double mean_loss = 0.0;  // batch loss at the unshifted parameters
  double xi_norm = 0.0;    // estimated gradient corruption
  double weight = 1.0;     // exp(-gamma_ns * xi_norm)
};

// Parameter-shift gradient: each rotation angle is shifted by +/- pi/2
// (2P + 1 circuit evaluations per sample for P angles), the head is
// differentiated in closed form. With exact readout the corruption proxy
// xi_norm is gamma_ad + p_pd of the active noise model; with shots > 0
// the whole gradient is evaluated twice and xi_norm is the norm of the
// difference, with the average of the two estimates returned.
GradientSample grad_parameter_shift(const PqcModel& model,
                                    std::span<const Sample> batch,
                                    const qsim::NoiseConfig& noise,
                                    double gamma_ns = 0.0,
                                    const ForwardOptions& options = {});

// Optimizer state shared across the local steps of one client.
struct TrainerState {
  double eta = 0.001;      // base learning rate
  double lambda = 0.0;     // pull toward the global anchor
  double gamma_ns = 0.0;   // noise sensitivity for step scaling
  double lr_decay = 0.9;   // multiplicative decay of the Adam rate
  int lr_decay_interval = 10;  // in global rounds
  int global_round = 0;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd adam_m;
  Eigen::VectorXd adam_v;
  int adam_steps = 0;

  // Adam learning rate for the current round: eta * decay^(round / interval).
  double effective_lr() const;
  void reset_adam(Eigen::Index num_params);
};

// Anchored SGD step
//   omega' = omega - eta * x * (g + lambda * (omega - omega_global))
// where x is the gradient's noise weight. With lambda = 0 and x = 1 this
// is plain SGD. The base eta is not decayed; the decay schedule belongs
// to Adam.
Eigen::VectorXd local_update_spqfl(const Eigen::VectorXd& omega,
                                   const GradientSample& grad,
                                   const Eigen::VectorXd& omega_global,
                                   const TrainerState& trainer);

// Adam on the anchored gradient g + lambda * (omega - omega_global), with
// bias correction and the decayed learning rate scaled by step_scale
// (used for the same noise weighting as the SGD rule). Updates moments in
// place.
Eigen::VectorXd adam_step(const Eigen::VectorXd& omega,
                          const Eigen::VectorXd& grad,
                          const Eigen::VectorXd& omega_global,
                          TrainerState& trainer, double step_scale = 1.0);

// Zeroes every rotation angle with |angle| < epsilon. Zeroed gates are
// elided during execution, so pruning shrinks circuit depth without
// changing the parameter layout.
PqcModel prune_gates(const PqcModel& model, double epsilon);

// Binary little-endian checkpoint (magic, version, shape, parameters).
void save_model(const PqcModel& model, const std::string& path);
PqcModel load_model(const std::string& path);

}  // namespace hetqfl::qnn
