#pragma once

// Small dense quantum simulator: statevector and density-matrix evolution
// for a handful of qubits, single-qubit Kraus channels for decoherence,
// and Z-basis readout. Dimensions grow as 2^n so this is meant for the
// few-qubit circuits used in federated training experiments, not for
// large-scale simulation.
//
// Conventions:
//   - qubit 0 is the most significant bit of the computational basis index,
//     so |q0 q1 ... q_{n-1}> maps to index q0*2^{n-1} + ... + q_{n-1}
//   - gates and channels act in place on value-semantic states
//   - channels require a density matrix; use to_density first for pure states

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "hetqfl/common.hpp"

namespace hetqfl::qsim {

class QuantumState {
 public:
  // |0...0> on num_qubits qubits, stored as a statevector.
  static QuantumState zero_state(int num_qubits);

  // Computational basis state |index>.
  static QuantumState basis_state(int num_qubits, std::uint64_t index);

  // Pure state from explicit amplitudes. The size must be a power of two
  // and the vector must be normalized to within 1e-9.
  static QuantumState from_amplitudes(CVector amplitudes);

  // Mixed state from an explicit density matrix. Must be square with
  // power-of-two dimension, Hermitian, unit trace, and positive
  // semidefinite to within 1e-9.
  static QuantumState from_density(CMatrix rho);

  int num_qubits() const { return num_qubits_; }
  Eigen::Index dim() const { return Eigen::Index{1} << num_qubits_; }
  bool is_mixed() const { return mixed_; }

  // Accessors throw std::logic_error when the representation does not match.
  const CVector& amplitudes() const;
  const CMatrix& density() const;
  CVector& mutable_amplitudes();
  CMatrix& mutable_density();

 private:
  QuantumState(int num_qubits, CVector amps);
  QuantumState(int num_qubits, CMatrix rho);

  int num_qubits_ = 0;
  bool mixed_ = false;
  CVector amps_;
  CMatrix rho_;

  friend QuantumState to_density(const QuantumState& state);
  friend QuantumState trace_out_lower(const QuantumState& state, int num_lower);
  friend class internal_access;
};

// Constructs states without re-running validation. For library internals
// and tests that build states from already-trusted data.
class internal_access {
 public:
  static QuantumState make_pure(int num_qubits, CVector amps) {
    return QuantumState(num_qubits, std::move(amps));
  }
  static QuantumState make_mixed(int num_qubits, CMatrix rho) {
    return QuantumState(num_qubits, std::move(rho));
  }
};

enum class GateKind { x, h, rx, ry, rz, cnot };

bool is_rotation(GateKind kind);

// One circuit element. Use the factory functions; they validate targets
// and reject angles on non-rotation gates.
struct Gate {
  GateKind kind = GateKind::x;
  double angle = 0.0;
  // target() for single-qubit gates; control()/target() for cnot.
  std::array<int, 2> qubits = {0, 0};
  int num_qubits = 1;

  int target() const { return qubits[num_qubits - 1]; }
  int control() const { return qubits[0]; }

  static Gate x(int target);
  static Gate h(int target);
  static Gate rx(double angle, int target);
  static Gate ry(double angle, int target);
  static Gate rz(double angle, int target);
  static Gate cnot(int control, int target);
};

// Unitary matrix of a single-qubit gate. Throws for cnot.
Matrix2c gate_matrix(const Gate& gate);

enum class ChannelLabel {
  identity,
  amplitude_damping,
  phase_damping,
  thermal_relaxation,
};

// Single-qubit channel in Kraus form: rho -> sum_k K_k rho K_k^dagger.
struct KrausChannel {
  std::vector<Matrix2c> operators;
  ChannelLabel label = ChannelLabel::identity;

  // Largest entry of |sum_k K_k^dagger K_k - I|.
  double completeness_defect() const;
  bool is_cptp(double tol = 1e-10) const;
};

KrausChannel identity_channel();

// Relaxation toward |0> with probability gamma in [0, 1].
// K0 = [[1, 0], [0, sqrt(1-gamma)]], K1 = [[0, sqrt(gamma)], [0, 0]].
KrausChannel amplitude_damping(double gamma);

// Phase damping with probability p in [0, 1].
// K0 = diag(1, sqrt(1-p)), K1 = diag(0, sqrt(p)).
KrausChannel phase_damping(double p);

// Combined T1 relaxation and T2 dephasing over a gate of the given
// duration, at zero temperature. Kraus operators are the composition of
// amplitude damping with gamma = 1 - exp(-t/T1) and an extra pure
// dephasing chosen so coherences decay as exp(-t/T2) overall.
// Requires t1 > 0, t2 > 0, t2 <= 2*t1, gate_time >= 0.
KrausChannel thermal_relaxation(double t1_us, double t2_us,
                                double gate_time_ns);

// Channel equal to applying `first` and then `second`. Kraus set is the
// set of pairwise products with zero operators pruned; the result carries
// the given label.
KrausChannel compose(const KrausChannel& first, const KrausChannel& second,
                     ChannelLabel label);

// Per-client decoherence settings. When disabled the simulator keeps the
// cheap statevector representation and applies no channels.
struct NoiseConfig {
  double gamma_ad = 0.0;  // amplitude damping probability per touched qubit
  double p_pd = 0.0;      // phase damping probability per touched qubit
  double t1_us = 50.0;
  double t2_us = 70.0;
  double gate_time_1q_ns = 50.0;
  double gate_time_2q_ns = 300.0;
  bool enabled = false;

  // Throws std::invalid_argument when a field is out of range or t2 > 2*t1.
  void validate() const;

  // Channels applied to every qubit touched by a gate of the given
  // duration: amplitude damping when gamma_ad > 0, phase damping when
  // p_pd > 0, then thermal relaxation (negligible when t1, t2 are large
  // relative to gate times). Empty when disabled.
  std::vector<KrausChannel> channels_for(double gate_time_ns) const;

  bool operator==(const NoiseConfig&) const = default;
};

// A single-qubit channel precomputed as a 4x4 superoperator acting on the
// column-stacked 2x2 block of the density matrix at the target qubit.
// Composing channels becomes a 4x4 matrix product, and application cost
// stops depending on the number of Kraus operators. Used on the hot path
// of noisy circuit execution; agrees with apply_channel to round-off.
struct ChannelSuperop {
  Matrix4c op = Matrix4c::Identity();

  static ChannelSuperop from_channel(const KrausChannel& channel);
  // Superoperator of channels applied in order (index 0 first).
  static ChannelSuperop from_channels(const std::vector<KrausChannel>& list);

  void apply_inplace(CMatrix& rho, int num_qubits, int target) const;
};

// Gate application. The pure overloads keep a statevector representation;
// mixed states are conjugated as G rho G^dagger.
void apply_gate_inplace(QuantumState& state, const Gate& gate);
QuantumState apply_gate(QuantumState state, const Gate& gate);

// Kraus channel application on one qubit of a density matrix. Validates
// CPTP to 1e-10 and throws std::invalid_argument otherwise, or
// std::logic_error when the state is pure.
void apply_channel_inplace(QuantumState& state, const KrausChannel& channel,
                           int target);
QuantumState apply_channel(QuantumState state, const KrausChannel& channel,
                           int target);

// Exact expectation of Pauli Z on one qubit.
double expectation_z(const QuantumState& state, int qubit);

// Finite-shot estimate: draws `shots` Bernoulli outcomes with the exact
// marginal and returns the empirical mean of +/-1 outcomes. shots must be
// positive.
double sampled_expectation_z(const QuantumState& state, int qubit, int shots,
                             std::mt19937_64& rng);

// |psi> -> |psi><psi|; returns mixed states unchanged.
QuantumState to_density(const QuantumState& state);

// Trace distance (1/2) * sum |eigenvalues(a - b)|. Pure inputs are
// converted to density matrices first. Dimensions must match.
double trace_distance(const QuantumState& a, const QuantumState& b);

// Partial trace over the num_lower least significant qubits (the highest
// qubit indices under the MSB-first convention). Result is mixed.
QuantumState trace_out_lower(const QuantumState& state, int num_lower);

// Random density matrix from a Ginibre draw, for tests and summaries.
QuantumState random_density(int num_qubits, std::mt19937_64& rng);

}  // namespace hetqfl::qsim
