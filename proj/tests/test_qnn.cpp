#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <doctest.h>

#include "hetqfl/qnn.hpp"

using namespace hetqfl;
using namespace hetqfl::qnn;

namespace {
const double kPi = std::acos(-1.0);

// Central finite differences over every parameter of the mean batch loss.
Eigen::VectorXd fd_gradient(PqcModel model, const std::vector<Sample>& batch,
                            const qsim::NoiseConfig& noise, double h) {
  Eigen::VectorXd grad(model.num_params());
  auto loss_at = [&](const PqcModel& m) {
    double total = 0.0;
    for (const auto& s : batch)
      total += loss_ce(forward(m, s.state, noise).logits, s.label);
    return total / static_cast<double>(batch.size());
  };
  for (Eigen::Index i = 0; i < model.num_params(); ++i) {
    const double saved = model.params()(i);
    model.params()(i) = saved + h;
    const double up = loss_at(model);
    model.params()(i) = saved - h;
    const double down = loss_at(model);
    model.params()(i) = saved;
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

std::vector<Sample> random_batch(int num_qubits, int size, int num_classes,
                                 std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  std::vector<Sample> batch;
  for (int i = 0; i < size; ++i) {
    CVector amps(Eigen::Index{1} << num_qubits);
    for (Eigen::Index k = 0; k < amps.size(); ++k)
      amps(k) = cxd(dist(rng), dist(rng));
    amps /= amps.norm();
    batch.push_back(
        {qsim::QuantumState::from_amplitudes(std::move(amps)), label(rng)});
  }
  return batch;
}
}  // namespace

TEST_CASE("parameter layout packs angles, head weights, and biases") {
  ParamLayout layout{3, 2, 2};
  CHECK(layout.circuit_size() == 18);
  CHECK(layout.size() == 26);
  CHECK(layout.angle(0, 0, 0) == 0);
  CHECK(layout.angle(1, 2, 0) == 15);
  CHECK(layout.angle(1, 2, 2) == 17);
  CHECK(layout.head_weight(0, 0) == 18);
  CHECK(layout.head_weight(1, 0) == 21);
  CHECK(layout.head_bias(0) == 24);
  CHECK(layout.head_bias(1) == 25);
}

TEST_CASE("freshly built models are reproducible and head-zeroed") {
  auto a = build_pqc(3, 2, 99);
  auto b = build_pqc(3, 2, 99);
  auto c = build_pqc(3, 2, 100);
  CHECK(a.params() == b.params());
  CHECK(a.params() != c.params());

  for (int l = 0; l < 2; ++l)
    for (int q = 0; q < 3; ++q)
      for (int ax = 0; ax < 3; ++ax) {
        CHECK(a.angle(l, q, ax) >= -kPi);
        CHECK(a.angle(l, q, ax) <= kPi);
      }
  for (int cls = 0; cls < 2; ++cls) {
    CHECK(a.head_bias(cls) == 0.0);
    for (int q = 0; q < 3; ++q) CHECK(a.head_weight(cls, q) == 0.0);
  }
}

TEST_CASE("zero angles are elided from the executed circuit") {
  auto model = build_pqc(2, 1, 5);
  const auto full = model.circuit_gates();
  // 6 rotations plus the 2-qubit entangling ring.
  CHECK(full.size() == 8);

  model.set_angle(0, 0, 0, 0.0);
  model.set_angle(0, 1, 2, 0.0);
  CHECK(model.circuit_gates().size() == 6);

  auto single = build_pqc(1, 1, 5);
  // No entangler on a single qubit.
  CHECK(single.circuit_gates().size() == 3);
}

TEST_CASE("forward on a single qubit matches the closed form") {
  PqcModel model(1, 1, 2);
  model.set_angle(0, 0, 1, 0.77);  // only RY is nonzero
  model.set_head_weight(0, 0, 1.0);
  model.set_head_weight(1, 0, -1.0);
  model.set_head_bias(1, 0.25);

  auto out = forward(model, qsim::QuantumState::zero_state(1), {});
  CHECK(std::abs(out.expectations(0) - std::cos(0.77)) < 1e-12);
  CHECK(std::abs(out.logits(0) - std::cos(0.77)) < 1e-12);
  CHECK(std::abs(out.logits(1) - (0.25 - std::cos(0.77))) < 1e-12);

  auto p = softmax(out.logits);
  CHECK(std::abs(p.sum() - 1.0) < 1e-12);
  CHECK(std::abs(loss_ce(out.logits, 0) + std::log(p(0))) < 1e-12);
}

TEST_CASE("noisy forward damps expectations toward zero") {
  PqcModel model(1, 1, 2);
  model.set_angle(0, 0, 1, kPi);  // RY(pi): |0> -> |1>, <Z> = -1 ideally
  qsim::NoiseConfig noise;
  noise.enabled = true;
  noise.gamma_ad = 0.2;

  auto ideal = forward(model, qsim::QuantumState::zero_state(1), {});
  auto noisy = forward(model, qsim::QuantumState::zero_state(1), noise);
  CHECK(std::abs(ideal.expectations(0) + 1.0) < 1e-12);
  CHECK(noisy.expectations(0) > ideal.expectations(0));
  CHECK(noisy.expectations(0) < 0.0);
}

TEST_CASE("shot readout needs an rng and is seed-deterministic") {
  auto model = build_pqc(2, 1, 21);
  auto input = qsim::QuantumState::zero_state(2);
  CHECK_THROWS_AS(forward(model, input, {}, {128, nullptr}),
                  std::invalid_argument);

  std::mt19937_64 rng_a(5), rng_b(5);
  auto a = forward(model, input, {}, {128, &rng_a});
  auto b = forward(model, input, {}, {128, &rng_b});
  CHECK(a.expectations == b.expectations);
}

TEST_CASE("parameter-shift gradient matches finite differences") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> qubits(1, 3);
  std::uniform_int_distribution<int> layers(1, 2);
  std::uniform_int_distribution<int> batch_size(1, 4);
  std::normal_distribution<double> head(0.0, 0.7);

  for (int trial = 0; trial < 6; ++trial) {
    const int q = qubits(rng);
    auto model = build_pqc(q, layers(rng), rng());
    for (int cls = 0; cls < model.num_classes(); ++cls) {
      model.set_head_bias(cls, head(rng));
      for (int k = 0; k < q; ++k) model.set_head_weight(cls, k, head(rng));
    }
    auto batch = random_batch(q, batch_size(rng), model.num_classes(), rng);

    qsim::NoiseConfig noise;
    if (trial % 2 == 1) {
      noise.enabled = true;
      noise.gamma_ad = 0.05;
      noise.p_pd = 0.03;
    }

    auto analytic = grad_parameter_shift(model, batch, noise);
    auto numeric = fd_gradient(model, batch, noise, 1e-4);
    const double dev = (analytic.grad - numeric).cwiseAbs().maxCoeff();
    CHECK(dev < 1e-5);
  }
}

TEST_CASE("gradient shifts still cover angles that sit exactly at zero") {
  auto model = build_pqc(2, 1, 3);
  model.set_angle(0, 0, 0, 0.0);
  model.set_angle(0, 1, 1, 0.0);
  for (int cls = 0; cls < 2; ++cls)
    for (int q = 0; q < 2; ++q)
      model.set_head_weight(cls, q, cls == 0 ? 0.8 : -0.3);

  std::mt19937_64 rng(7);
  auto batch = random_batch(2, 2, 2, rng);
  auto analytic = grad_parameter_shift(model, batch, {});
  auto numeric = fd_gradient(model, batch, {}, 1e-4);
  CHECK((analytic.grad - numeric).cwiseAbs().maxCoeff() < 1e-5);
  // The elided gates still carry gradient signal.
  CHECK(std::abs(analytic.grad(model.angle_index(0, 0, 0))) > 1e-8);
}

TEST_CASE("gradient weight reflects the configured noise exposure") {
  auto model = build_pqc(1, 1, 9);
  std::mt19937_64 rng(13);
  auto batch = random_batch(1, 2, 2, rng);

  auto clean = grad_parameter_shift(model, batch, {}, 2.0);
  CHECK(clean.xi_norm == 0.0);
  CHECK(clean.weight == 1.0);

  qsim::NoiseConfig noise;
  noise.enabled = true;
  noise.gamma_ad = 0.05;
  noise.p_pd = 0.02;
  auto noisy = grad_parameter_shift(model, batch, noise, 2.0);
  CHECK(std::abs(noisy.xi_norm - 0.07) < 1e-12);
  CHECK(std::abs(noisy.weight - std::exp(-2.0 * 0.07)) < 1e-12);

  // Finite shots estimate the corruption from two independent passes.
  std::mt19937_64 shot_rng(31);
  auto shot = grad_parameter_shift(model, batch, noise, 2.0,
                                   {256, &shot_rng});
  CHECK(shot.xi_norm >= 0.0);
  CHECK(shot.weight <= 1.0);
}

TEST_CASE("anchored sgd update reproduces the hand-computed scalar case") {
  Eigen::VectorXd omega(1), g(1), anchor(1);
  omega << 1.0;
  g << 0.5;
  anchor << 0.0;
  GradientSample grad{g, 0.0, 0.0, 1.0};
  TrainerState trainer;
  trainer.eta = 0.1;
  trainer.lambda = 0.1;
  auto next = local_update_spqfl(omega, grad, anchor, trainer);
  CHECK(next(0) == 0.94);

  // A noise weight of x scales the whole step.
  grad.weight = 0.5;
  auto damped = local_update_spqfl(omega, grad, anchor, trainer);
  CHECK(std::abs(damped(0) - 0.97) < 1e-15);
}

TEST_CASE("learning rate decays by 0.9 every ten rounds") {
  TrainerState trainer;
  trainer.eta = 0.001;
  trainer.global_round = 0;
  const double lr0 = trainer.effective_lr();
  CHECK(lr0 == 0.001);
  trainer.global_round = 9;
  CHECK(trainer.effective_lr() == 0.001);
  trainer.global_round = 10;
  CHECK(std::abs(trainer.effective_lr() / lr0 - 0.9) < 1e-12);
  trainer.global_round = 25;
  CHECK(std::abs(trainer.effective_lr() - 0.001 * 0.81) < 1e-15);
}

TEST_CASE("adam step matches a scalar reference implementation") {
  TrainerState trainer;
  trainer.eta = 0.01;
  trainer.lambda = 0.2;
  trainer.reset_adam(1);

  Eigen::VectorXd omega(1), anchor(1), grad(1);
  omega << 0.5;
  anchor << 0.1;
  grad << 0.3;

  // Reference: one bias-corrected step on g + lambda * (omega - anchor).
  double m = 0.0, v = 0.0;
  double w = 0.5;
  for (int step = 1; step <= 3; ++step) {
    const double g = 0.3 + 0.2 * (w - 0.1);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, step));
    const double vhat = v / (1.0 - std::pow(0.999, step));
    w -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);

    omega = adam_step(omega, grad, anchor, trainer);
    CHECK(std::abs(omega(0) - w) < 1e-14);
  }

  // step_scale shrinks the applied update.
  TrainerState scaled;
  scaled.eta = 0.01;
  scaled.reset_adam(1);
  Eigen::VectorXd x(1);
  x << 1.0;
  auto moved = adam_step(x, grad, x, scaled, 1.0);
  scaled.reset_adam(1);
  auto half = adam_step(x, grad, x, scaled, 0.5);
  CHECK(std::abs((x(0) - half(0)) - 0.5 * (x(0) - moved(0))) < 1e-14);
}

TEST_CASE("pruning zeroes small angles and shortens the circuit") {
  auto model = build_pqc(2, 1, 77);
  model.set_angle(0, 0, 0, 1e-4);
  model.set_angle(0, 1, 1, -1e-4);
  const auto before = model.circuit_gates().size();
  auto pruned = prune_gates(model, 1e-3);
  CHECK(pruned.angle(0, 0, 0) == 0.0);
  CHECK(pruned.angle(0, 1, 1) == 0.0);
  CHECK(pruned.circuit_gates().size() == before - 2);
  // Other parameters survive untouched.
  CHECK(pruned.angle(0, 0, 1) == model.angle(0, 0, 1));
}

TEST_CASE("model checkpoints round-trip exactly") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "hetqfl_model_rt.bin").string();

  auto model = build_pqc(3, 2, 4242, 4);
  model.set_head_weight(2, 1, -0.125);
  save_model(model, path);
  auto loaded = load_model(path);
  CHECK(loaded.num_qubits() == 3);
  CHECK(loaded.num_layers() == 2);
  CHECK(loaded.num_classes() == 4);
  CHECK(loaded.params() == model.params());

  // Corrupt the magic and expect a hard failure.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('Z');
  }
  CHECK_THROWS_AS(load_model(path), std::runtime_error);
  CHECK_THROWS_AS(load_model(path + ".missing"), std::runtime_error);
  std::remove(path.c_str());
}
