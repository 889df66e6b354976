#include "hetqfl/encode.hpp"

#include <cmath>

namespace hetqfl::encode {

Eigen::MatrixXd standardize(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out = features;
  const double n = static_cast<double>(features.rows());
  if (n == 0) return out;
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double mean = features.col(j).mean();
    const double var = (features.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
      out.col(j).setZero();
    } else {
      out.col(j) = (features.col(j).array() - mean) / sd;
    }
  }
  return out;
}

qsim::QuantumState amplitude_encode(const Eigen::VectorXd& x, int num_qubits) {
  if (num_qubits < 1) throw std::invalid_argument("need at least one qubit");
  const Eigen::Index dim = Eigen::Index{1} << num_qubits;
  if (x.size() > dim)
    throw std::invalid_argument(
        "feature vector does not fit in 2^num_qubits amplitudes");
  const double norm = x.norm();
  if (norm < 1e-12)
    throw std::invalid_argument("cannot amplitude-encode the zero vector");
  CVector amps = CVector::Zero(dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) amps[i] = x[i] / norm;
  return qsim::internal_access::make_pure(num_qubits, std::move(amps));
}

qsim::QuantumState basis_encode(const std::vector<int>& bits) {
  if (bits.empty()) throw std::invalid_argument("empty bit vector");
  std::uint64_t index = 0;
  for (int b : bits) {
    if (b != 0 && b != 1)
      throw std::invalid_argument("basis encoding needs 0/1 entries");
    index = (index << 1) | static_cast<std::uint64_t>(b);
  }
  return qsim::QuantumState::basis_state(static_cast<int>(bits.size()), index);
}

std::vector<qsim::Gate> angle_encode(const Eigen::VectorXd& x, int num_qubits) {
  if (x.size() > num_qubits)
    throw std::invalid_argument("angle encoding needs one qubit per feature");
  std::vector<qsim::Gate> gates;
  gates.reserve(static_cast<std::size_t>(x.size()));
  for (Eigen::Index j = 0; j < x.size(); ++j)
    gates.push_back(qsim::Gate::ry(x[j], static_cast<int>(j)));
  return gates;
}

qsim::QuantumState pad_to_qubits(const qsim::QuantumState& state,
                                 int num_qubits) {
  const int extra = num_qubits - state.num_qubits();
  if (extra < 0)
    throw std::invalid_argument("cannot pad a state to fewer qubits");
  if (extra == 0) return state;
  const Eigen::Index shift = Eigen::Index{1} << extra;
  if (state.is_mixed()) {
    const CMatrix& rho = state.density();
    CMatrix out = CMatrix::Zero(rho.rows() * shift, rho.cols() * shift);
    for (Eigen::Index a = 0; a < rho.rows(); ++a)
      for (Eigen::Index b = 0; b < rho.cols(); ++b)
        out(a * shift, b * shift) = rho(a, b);
    return qsim::internal_access::make_mixed(num_qubits, std::move(out));
  }
  const CVector& v = state.amplitudes();
  CVector out = CVector::Zero(v.size() * shift);
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i * shift] = v[i];
  return qsim::internal_access::make_pure(num_qubits, std::move(out));
}

Encoder::Encoder(EncoderKind kind, int num_qubits, Normalization normalization)
    : kind_(kind), num_qubits_(num_qubits), normalization_(normalization) {
  if (num_qubits < 1) throw std::invalid_argument("need at least one qubit");
}

void Encoder::fit(const Eigen::MatrixXd& train_features) {
  if (train_features.rows() == 0)
    throw std::invalid_argument("cannot fit an encoder on no samples");
  const double n = static_cast<double>(train_features.rows());
  mean_ = train_features.colwise().mean();
  std_.resize(train_features.cols());
  for (Eigen::Index j = 0; j < train_features.cols(); ++j) {
    const double var =
        (train_features.col(j).array() - mean_[j]).square().sum() / n;
    std_[j] = std::sqrt(var);
  }
  fitted_ = true;
}

qsim::QuantumState Encoder::encode(const Eigen::VectorXd& x) const {
  Eigen::VectorXd features = x;
  if (normalization_ == Normalization::zscore_then_l2) {
    if (!fitted_)
      throw std::logic_error("encoder with z-scoring must be fitted first");
    if (x.size() != mean_.size())
      throw std::invalid_argument("feature size differs from fitted size");
    for (Eigen::Index j = 0; j < features.size(); ++j)
      features[j] = std_[j] < 1e-12 ? 0.0 : (x[j] - mean_[j]) / std_[j];
  }
  switch (kind_) {
    case EncoderKind::amplitude:
      return amplitude_encode(features, num_qubits_);
    case EncoderKind::angle: {
      auto state = qsim::QuantumState::zero_state(num_qubits_);
      for (const auto& gate : angle_encode(features, num_qubits_))
        qsim::apply_gate_inplace(state, gate);
      return state;
    }
    case EncoderKind::basis: {
      std::vector<int> bits(static_cast<std::size_t>(num_qubits_), 0);
      if (features.size() > num_qubits_)
        throw std::invalid_argument("basis encoding needs one qubit per bit");
      for (Eigen::Index j = 0; j < features.size(); ++j) {
        if (features[j] != 0.0 && features[j] != 1.0)
          throw std::invalid_argument("basis encoding needs 0/1 features");
        bits[static_cast<std::size_t>(j)] = static_cast<int>(features[j]);
      }
      return basis_encode(bits);
    }
  }
  throw std::logic_error("unknown encoder kind");
}

qsim::QuantumState client_state_summary(const Eigen::MatrixXd& features,
                                        const Encoder& encoder,
                                        int sample_cap) {
  if (features.rows() == 0)
    throw std::invalid_argument("cannot summarize an empty shard");
  if (sample_cap < 1) throw std::invalid_argument("sample_cap must be >= 1");
  const Eigen::Index m =
      std::min<Eigen::Index>(features.rows(), sample_cap);
  const Eigen::Index dim = Eigen::Index{1} << encoder.num_qubits();
  CMatrix rho = CMatrix::Zero(dim, dim);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto state = qsim::to_density(encoder.encode(features.row(i)));
    rho += state.density();
  }
  rho /= static_cast<double>(m);
  return qsim::internal_access::make_mixed(encoder.num_qubits(),
                                           std::move(rho));
}

}  // namespace hetqfl::encode
