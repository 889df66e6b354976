#pragma once

// Classical-to-quantum feature maps. Amplitude encoding packs a length-d
// feature vector into the amplitudes of ceil(log2 d) qubits, angle encoding
// uses one RY rotation per feature, and basis encoding maps bit vectors to
// computational basis states.

#include <vector>

#include "hetqfl/common.hpp"
#include "hetqfl/qsim.hpp"

namespace hetqfl::encode {

enum class EncoderKind { basis, amplitude, angle };
enum class Normalization { l2, zscore_then_l2 };

// Column-wise z-scoring with the population standard deviation.
// Constant columns are mapped to zero rather than dividing by zero.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& features);

// Zero-pads x to 2^num_qubits entries and normalizes. Throws when x has
// more than 2^num_qubits entries or is the zero vector.
qsim::QuantumState amplitude_encode(const Eigen::VectorXd& x, int num_qubits);

// |b_0 b_1 ... b_{n-1}> from a vector of 0/1 entries.
qsim::QuantumState basis_encode(const std::vector<int>& bits);

// RY(x_j) on qubit j, for circuits that load features as rotations.
// Requires x.size() <= num_qubits; remaining qubits get no gate.
std::vector<qsim::Gate> angle_encode(const Eigen::VectorXd& x, int num_qubits);

// Embeds a state into a larger register, appending |0> ancillas at the
// least significant positions so existing qubit indices keep their
// meaning. This is the unitary embedding used when clients with fewer
// qubits contribute states to a wider global model.
qsim::QuantumState pad_to_qubits(const qsim::QuantumState& state,
                                 int num_qubits);

// Stateless functions above; Encoder adds fitted normalization and a
// uniform interface over the three kinds.
class Encoder {
 public:
  Encoder(EncoderKind kind, int num_qubits,
          Normalization normalization = Normalization::l2);

  // Captures per-feature mean and population std from training features.
  // Must be called before encode() when normalization is zscore_then_l2;
  // fitting on training data only keeps test statistics out of the model.
  void fit(const Eigen::MatrixXd& train_features);

  qsim::QuantumState encode(const Eigen::VectorXd& x) const;

  EncoderKind kind() const { return kind_; }
  int num_qubits() const { return num_qubits_; }
  Normalization normalization() const { return normalization_; }

 private:
  EncoderKind kind_;
  int num_qubits_;
  Normalization normalization_;
  bool fitted_ = false;
  Eigen::VectorXd mean_;
  Eigen::VectorXd std_;
};

// Mixed state summarizing a client's local data distribution: the uniform
// mixture of the first min(rows, sample_cap) encoded samples. Used by the
// encoding-aware aggregation weights.
qsim::QuantumState client_state_summary(const Eigen::MatrixXd& features,
                                        const Encoder& encoder,
                                        int sample_cap = 64);

}  // namespace hetqfl::encode
