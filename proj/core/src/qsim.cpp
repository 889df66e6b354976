#include "hetqfl/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace hetqfl::qsim {
namespace {

constexpr double kStateTol = 1e-9;
constexpr double kCptpTol = 1e-10;

bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

int qubit_count_for_dim(Eigen::Index dim) {
  int n = 0;
  while ((Eigen::Index{1} << n) < dim) ++n;
  return n;
}

// Bit mask selecting the target qubit under the MSB-first convention.
Eigen::Index qubit_mask(int num_qubits, int qubit) {
  if (qubit < 0 || qubit >= num_qubits)
    throw std::out_of_range("qubit index out of range");
  return Eigen::Index{1} << (num_qubits - 1 - qubit);
}

// v <- (G on target qubit) v
void apply_1q_statevector(CVector& v, const Matrix2c& g, Eigen::Index mask) {
  const Eigen::Index dim = v.size();
  for (Eigen::Index grp = 0; grp < dim; grp += 2 * mask) {
    for (Eigen::Index i = grp; i < grp + mask; ++i) {
      const cxd a0 = v[i];
      const cxd a1 = v[i + mask];
      v[i] = g(0, 0) * a0 + g(0, 1) * a1;
      v[i + mask] = g(1, 0) * a0 + g(1, 1) * a1;
    }
  }
}

// m <- (G on target qubit) m
void apply_1q_left(CMatrix& m, const Matrix2c& g, Eigen::Index mask) {
  const Eigen::Index dim = m.rows();
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index grp = 0; grp < dim; grp += 2 * mask) {
      for (Eigen::Index i = grp; i < grp + mask; ++i) {
        const cxd a0 = m(i, j);
        const cxd a1 = m(i + mask, j);
        m(i, j) = g(0, 0) * a0 + g(0, 1) * a1;
        m(i + mask, j) = g(1, 0) * a0 + g(1, 1) * a1;
      }
    }
  }
}

// m <- m (G on target qubit)^dagger
void apply_1q_right_adj(CMatrix& m, const Matrix2c& g, Eigen::Index mask) {
  const Eigen::Index dim = m.rows();
  CVector tmp(dim);
  for (Eigen::Index grp = 0; grp < dim; grp += 2 * mask) {
    for (Eigen::Index j = grp; j < grp + mask; ++j) {
      tmp = m.col(j);
      m.col(j) = std::conj(g(0, 0)) * tmp + std::conj(g(0, 1)) * m.col(j + mask);
      m.col(j + mask) =
          std::conj(g(1, 0)) * tmp + std::conj(g(1, 1)) * m.col(j + mask);
    }
  }
}

void apply_cnot_statevector(CVector& v, Eigen::Index cmask,
                            Eigen::Index tmask) {
  const Eigen::Index dim = v.size();
  for (Eigen::Index i = 0; i < dim; ++i) {
    if ((i & cmask) && !(i & tmask)) std::swap(v[i], v[i | tmask]);
  }
}

void apply_cnot_density(CMatrix& m, Eigen::Index cmask, Eigen::Index tmask) {
  const Eigen::Index dim = m.rows();
  for (Eigen::Index i = 0; i < dim; ++i) {
    if ((i & cmask) && !(i & tmask)) m.row(i).swap(m.row(i | tmask));
  }
  for (Eigen::Index j = 0; j < dim; ++j) {
    if ((j & cmask) && !(j & tmask)) m.col(j).swap(m.col(j | tmask));
  }
}

Matrix2c zero2x2() { return Matrix2c::Zero(); }

}  // namespace

QuantumState::QuantumState(int num_qubits, CVector amps)
    : num_qubits_(num_qubits), mixed_(false), amps_(std::move(amps)) {}

QuantumState::QuantumState(int num_qubits, CMatrix rho)
    : num_qubits_(num_qubits), mixed_(true), rho_(std::move(rho)) {}

QuantumState QuantumState::zero_state(int num_qubits) {
  return basis_state(num_qubits, 0);
}

QuantumState QuantumState::basis_state(int num_qubits, std::uint64_t index) {
  if (num_qubits < 1) throw std::invalid_argument("need at least one qubit");
  const Eigen::Index dim = Eigen::Index{1} << num_qubits;
  if (index >= static_cast<std::uint64_t>(dim))
    throw std::out_of_range("basis index out of range");
  CVector amps = CVector::Zero(dim);
  amps[static_cast<Eigen::Index>(index)] = 1.0;
  return QuantumState(num_qubits, std::move(amps));
}

QuantumState QuantumState::from_amplitudes(CVector amplitudes) {
  if (!is_power_of_two(amplitudes.size()))
    throw std::invalid_argument("amplitude vector size must be a power of two");
  if (std::abs(amplitudes.norm() - 1.0) > kStateTol)
    throw std::invalid_argument("amplitude vector is not normalized");
  const int n = qubit_count_for_dim(amplitudes.size());
  return QuantumState(n, std::move(amplitudes));
}

QuantumState QuantumState::from_density(CMatrix rho) {
  if (rho.rows() != rho.cols() || !is_power_of_two(rho.rows()))
    throw std::invalid_argument("density matrix must be square, power-of-two");
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > kStateTol)
    throw std::invalid_argument("density matrix is not Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > kStateTol ||
      std::abs(rho.trace().imag()) > kStateTol)
    throw std::invalid_argument("density matrix trace is not one");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kStateTol)
    throw std::invalid_argument("density matrix is not positive semidefinite");
  const int n = qubit_count_for_dim(rho.rows());
  return QuantumState(n, std::move(rho));
}

const CVector& QuantumState::amplitudes() const {
  if (mixed_) throw std::logic_error("state is mixed, no amplitudes");
  return amps_;
}

const CMatrix& QuantumState::density() const {
  if (!mixed_) throw std::logic_error("state is pure, use to_density");
  return rho_;
}

CVector& QuantumState::mutable_amplitudes() {
  if (mixed_) throw std::logic_error("state is mixed, no amplitudes");
  return amps_;
}

CMatrix& QuantumState::mutable_density() {
  if (!mixed_) throw std::logic_error("state is pure, use to_density");
  return rho_;
}

bool is_rotation(GateKind kind) {
  return kind == GateKind::rx || kind == GateKind::ry || kind == GateKind::rz;
}

static Gate make_1q(GateKind kind, double angle, int target) {
  if (target < 0) throw std::out_of_range("negative qubit index");
  if (!std::isfinite(angle)) throw std::invalid_argument("angle must be finite");
  Gate g;
  g.kind = kind;
  g.angle = angle;
  g.qubits = {target, target};
  g.num_qubits = 1;
  return g;
}

Gate Gate::x(int target) { return make_1q(GateKind::x, 0.0, target); }
Gate Gate::h(int target) { return make_1q(GateKind::h, 0.0, target); }
Gate Gate::rx(double angle, int target) {
  return make_1q(GateKind::rx, angle, target);
}
Gate Gate::ry(double angle, int target) {
  return make_1q(GateKind::ry, angle, target);
}
Gate Gate::rz(double angle, int target) {
  return make_1q(GateKind::rz, angle, target);
}

Gate Gate::cnot(int control, int target) {
  if (control < 0 || target < 0) throw std::out_of_range("negative qubit index");
  if (control == target)
    throw std::invalid_argument("cnot control and target must differ");
  Gate g;
  g.kind = GateKind::cnot;
  g.qubits = {control, target};
  g.num_qubits = 2;
  return g;
}

Matrix2c gate_matrix(const Gate& gate) {
  const double half = gate.angle / 2.0;
  const cxd i(0.0, 1.0);
  Matrix2c m;
  switch (gate.kind) {
    case GateKind::x:
      m << 0, 1, 1, 0;
      return m;
    case GateKind::h:
      m << 1, 1, 1, -1;
      return m / std::sqrt(2.0);
    case GateKind::rx:
      m << std::cos(half), -i * std::sin(half), -i * std::sin(half),
          std::cos(half);
      return m;
    case GateKind::ry:
      m << std::cos(half), -std::sin(half), std::sin(half), std::cos(half);
      return m;
    case GateKind::rz:
      m << std::exp(-i * half), 0, 0, std::exp(i * half);
      return m;
    case GateKind::cnot:
      break;
  }
  throw std::invalid_argument("cnot has no single-qubit matrix");
}

double KrausChannel::completeness_defect() const {
  Matrix2c sum = Matrix2c::Zero();
  for (const auto& k : operators) sum += k.adjoint() * k;
  return (sum - Matrix2c::Identity()).cwiseAbs().maxCoeff();
}

bool KrausChannel::is_cptp(double tol) const {
  return !operators.empty() && completeness_defect() <= tol;
}

KrausChannel identity_channel() {
  return {{Matrix2c::Identity()}, ChannelLabel::identity};
}

KrausChannel amplitude_damping(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("amplitude damping gamma must be in [0, 1]");
  Matrix2c k0 = Matrix2c::Identity();
  k0(1, 1) = std::sqrt(1.0 - gamma);
  Matrix2c k1 = zero2x2();
  k1(0, 1) = std::sqrt(gamma);
  return {{k0, k1}, ChannelLabel::amplitude_damping};
}

KrausChannel phase_damping(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("phase damping p must be in [0, 1]");
  Matrix2c k0 = Matrix2c::Identity();
  k0(1, 1) = std::sqrt(1.0 - p);
  Matrix2c k1 = zero2x2();
  k1(1, 1) = std::sqrt(p);
  return {{k0, k1}, ChannelLabel::phase_damping};
}

KrausChannel compose(const KrausChannel& first, const KrausChannel& second,
                     ChannelLabel label) {
  KrausChannel out;
  out.label = label;
  for (const auto& b : second.operators) {
    for (const auto& a : first.operators) {
      Matrix2c prod = b * a;
      if (prod.cwiseAbs().maxCoeff() > 1e-15) out.operators.push_back(prod);
    }
  }
  if (out.operators.empty()) out.operators.push_back(zero2x2());
  return out;
}

KrausChannel thermal_relaxation(double t1_us, double t2_us,
                                double gate_time_ns) {
  if (!(t1_us > 0.0) || !(t2_us > 0.0))
    throw std::invalid_argument("relaxation times must be positive");
  if (t2_us > 2.0 * t1_us)
    throw std::invalid_argument("t2 must not exceed 2*t1");
  if (!(gate_time_ns >= 0.0))
    throw std::invalid_argument("gate time must be nonnegative");
  const double t_us = gate_time_ns * 1e-3;
  // Population decays as exp(-t/T1). Amplitude damping alone shrinks
  // coherences by exp(-t/(2*T1)); the extra dephasing below brings the
  // total coherence factor to exp(-t/T2).
  const double p_reset = 1.0 - std::exp(-t_us / t1_us);
  const double p_phi =
      std::clamp(1.0 - std::exp(t_us / t1_us - 2.0 * t_us / t2_us), 0.0, 1.0);
  return compose(amplitude_damping(p_reset), phase_damping(p_phi),
                 ChannelLabel::thermal_relaxation);
}

void NoiseConfig::validate() const {
  if (!(gamma_ad >= 0.0 && gamma_ad <= 1.0))
    throw std::invalid_argument("noise.gamma_ad must be in [0, 1]");
  if (!(p_pd >= 0.0 && p_pd <= 1.0))
    throw std::invalid_argument("noise.p_pd must be in [0, 1]");
  if (!(t1_us > 0.0)) throw std::invalid_argument("noise.t1_us must be > 0");
  if (!(t2_us > 0.0)) throw std::invalid_argument("noise.t2_us must be > 0");
  if (t2_us > 2.0 * t1_us)
    throw std::invalid_argument("noise.t2_us must not exceed 2*t1_us");
  if (!(gate_time_1q_ns >= 0.0) || !(gate_time_2q_ns >= 0.0))
    throw std::invalid_argument("noise gate times must be >= 0");
}

std::vector<KrausChannel> NoiseConfig::channels_for(
    double gate_time_ns) const {
  if (!enabled) return {};
  validate();
  std::vector<KrausChannel> out;
  if (gamma_ad > 0.0) out.push_back(amplitude_damping(gamma_ad));
  if (p_pd > 0.0) out.push_back(phase_damping(p_pd));
  out.push_back(thermal_relaxation(t1_us, t2_us, gate_time_ns));
  return out;
}

ChannelSuperop ChannelSuperop::from_channel(const KrausChannel& channel) {
  if (!channel.is_cptp())
    throw std::invalid_argument("channel is not trace preserving");
  ChannelSuperop s;
  s.op = Matrix4c::Zero();
  // vec(K B K^dagger) = (conj(K) kron K) vec(B) for column-stacked vec.
  for (const auto& k : channel.operators) {
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        s.op.block<2, 2>(2 * r, 2 * c) += std::conj(k(r, c)) * k;
  }
  return s;
}

ChannelSuperop ChannelSuperop::from_channels(
    const std::vector<KrausChannel>& list) {
  ChannelSuperop s;
  for (const auto& ch : list) s.op = from_channel(ch).op * s.op;
  return s;
}

void ChannelSuperop::apply_inplace(CMatrix& rho, int num_qubits,
                                   int target) const {
  const Eigen::Index mask = qubit_mask(num_qubits, target);
  const Eigen::Index dim = rho.rows();
  for (Eigen::Index jg = 0; jg < dim; jg += 2 * mask) {
    for (Eigen::Index j = jg; j < jg + mask; ++j) {
      for (Eigen::Index ig = 0; ig < dim; ig += 2 * mask) {
        for (Eigen::Index i = ig; i < ig + mask; ++i) {
          const cxd b00 = rho(i, j);
          const cxd b10 = rho(i + mask, j);
          const cxd b01 = rho(i, j + mask);
          const cxd b11 = rho(i + mask, j + mask);
          rho(i, j) = op(0, 0) * b00 + op(0, 1) * b10 + op(0, 2) * b01 +
                      op(0, 3) * b11;
          rho(i + mask, j) = op(1, 0) * b00 + op(1, 1) * b10 +
                             op(1, 2) * b01 + op(1, 3) * b11;
          rho(i, j + mask) = op(2, 0) * b00 + op(2, 1) * b10 +
                             op(2, 2) * b01 + op(2, 3) * b11;
          rho(i + mask, j + mask) = op(3, 0) * b00 + op(3, 1) * b10 +
                                    op(3, 2) * b01 + op(3, 3) * b11;
        }
      }
    }
  }
}

void apply_gate_inplace(QuantumState& state, const Gate& gate) {
  const int n = state.num_qubits();
  if (gate.kind == GateKind::cnot) {
    const Eigen::Index cmask = qubit_mask(n, gate.control());
    const Eigen::Index tmask = qubit_mask(n, gate.target());
    if (state.is_mixed()) {
      apply_cnot_density(state.mutable_density(), cmask, tmask);
    } else {
      apply_cnot_statevector(state.mutable_amplitudes(), cmask, tmask);
    }
    return;
  }
  const Eigen::Index mask = qubit_mask(n, gate.target());
  const Matrix2c g = gate_matrix(gate);
  if (state.is_mixed()) {
    apply_1q_left(state.mutable_density(), g, mask);
    apply_1q_right_adj(state.mutable_density(), g, mask);
  } else {
    apply_1q_statevector(state.mutable_amplitudes(), g, mask);
  }
}

QuantumState apply_gate(QuantumState state, const Gate& gate) {
  apply_gate_inplace(state, gate);
  return state;
}

void apply_channel_inplace(QuantumState& state, const KrausChannel& channel,
                           int target) {
  if (!state.is_mixed())
    throw std::logic_error("channels act on density matrices; use to_density");
  if (!channel.is_cptp(kCptpTol))
    throw std::invalid_argument("channel is not trace preserving");
  CMatrix& rho = state.mutable_density();
  const Eigen::Index mask = qubit_mask(state.num_qubits(), target);
  CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
  CMatrix term(rho.rows(), rho.cols());
  for (const auto& k : channel.operators) {
    term = rho;
    apply_1q_left(term, k, mask);
    apply_1q_right_adj(term, k, mask);
    out += term;
  }
  rho = std::move(out);
}

QuantumState apply_channel(QuantumState state, const KrausChannel& channel,
                           int target) {
  apply_channel_inplace(state, channel, target);
  return state;
}

double expectation_z(const QuantumState& state, int qubit) {
  const Eigen::Index mask = qubit_mask(state.num_qubits(), qubit);
  double value = 0.0;
  if (state.is_mixed()) {
    const CMatrix& rho = state.density();
    for (Eigen::Index i = 0; i < rho.rows(); ++i)
      value += ((i & mask) ? -1.0 : 1.0) * rho(i, i).real();
  } else {
    const CVector& v = state.amplitudes();
    for (Eigen::Index i = 0; i < v.size(); ++i)
      value += ((i & mask) ? -1.0 : 1.0) * std::norm(v[i]);
  }
  return value;
}

double sampled_expectation_z(const QuantumState& state, int qubit, int shots,
                             std::mt19937_64& rng) {
  if (shots <= 0) throw std::invalid_argument("shots must be positive");
  const double p1 = std::clamp((1.0 - expectation_z(state, qubit)) / 2.0, 0.0, 1.0);
  std::binomial_distribution<int> dist(shots, p1);
  const int ones = dist(rng);
  return 1.0 - 2.0 * static_cast<double>(ones) / shots;
}

QuantumState to_density(const QuantumState& state) {
  if (state.is_mixed()) return state;
  const CVector& v = state.amplitudes();
  CMatrix rho = v * v.adjoint();
  return QuantumState(state.num_qubits(), std::move(rho));
}

double trace_distance(const QuantumState& a, const QuantumState& b) {
  if (a.num_qubits() != b.num_qubits())
    throw std::invalid_argument("trace distance needs equal dimensions");
  const CMatrix diff = to_density(a).density() - to_density(b).density();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(diff, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

QuantumState trace_out_lower(const QuantumState& state, int num_lower) {
  if (num_lower < 0 || num_lower >= state.num_qubits())
    throw std::out_of_range("must keep at least one qubit");
  if (num_lower == 0) return to_density(state);
  const int kept = state.num_qubits() - num_lower;
  const Eigen::Index kept_dim = Eigen::Index{1} << kept;
  const Eigen::Index low_dim = Eigen::Index{1} << num_lower;
  CMatrix out = CMatrix::Zero(kept_dim, kept_dim);
  if (state.is_mixed()) {
    const CMatrix& rho = state.density();
    for (Eigen::Index a = 0; a < kept_dim; ++a)
      for (Eigen::Index b = 0; b < kept_dim; ++b)
        for (Eigen::Index l = 0; l < low_dim; ++l)
          out(a, b) += rho(a * low_dim + l, b * low_dim + l);
  } else {
    const CVector& v = state.amplitudes();
    for (Eigen::Index a = 0; a < kept_dim; ++a)
      for (Eigen::Index b = 0; b < kept_dim; ++b)
        for (Eigen::Index l = 0; l < low_dim; ++l)
          out(a, b) += v[a * low_dim + l] * std::conj(v[b * low_dim + l]);
  }
  return QuantumState(kept, std::move(out));
}

QuantumState random_density(int num_qubits, std::mt19937_64& rng) {
  if (num_qubits < 1) throw std::invalid_argument("need at least one qubit");
  const Eigen::Index dim = Eigen::Index{1} << num_qubits;
  std::normal_distribution<double> normal(0.0, 1.0);
  CMatrix a(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) a(i, j) = cxd(normal(rng), normal(rng));
  CMatrix rho = a * a.adjoint();
  rho /= rho.trace().real();
  return internal_access::make_mixed(num_qubits, std::move(rho));
}

}  // namespace hetqfl::qsim
