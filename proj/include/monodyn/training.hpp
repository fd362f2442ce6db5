#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "monodyn/common.hpp"
#include "monodyn/dynamics.hpp"
#include "monodyn/net.hpp"
#include "monodyn/window.hpp"

namespace monodyn::training {

enum class Method { MonoLyap, MonoOnly, Baseline };
enum class UpdateOrder { VFirst, FFirst };

struct TrainConfig {
  int q = 1;
  std::vector<int> hidden = {2000, 2000};
  std::vector<int> v_hidden;  // empty: same as hidden
  long epochs = 400000;       // alternating steps, each on a fresh batch
  int batch = 500;
  double lr_f = 1e-4;
  double lr_v = 1e-5;
  double decay_rate = 0.98;
  long decay_interval = 250;
  double weight_decay = 0.01;
  Method method = Method::MonoLyap;
  nn::ConstraintMode constraint = nn::ConstraintMode::BnSoft;
  // Lyapunov-net constraint: None trains a free value function; the hard
  // modes initialize positive-small and re-project trunk and head, keeping
  // the value function monotone.
  nn::ConstraintMode v_constraint = nn::ConstraintMode::None;
  double min_relu_fraction = 0.5;
  VectorXd equilibrium;  // empty: origin
  UpdateOrder order = UpdateOrder::VFirst;
  std::uint64_t seed = 0;
  long checkpoint_interval = 0;  // 0: never

  void validate() const;
};

struct LossBreakdown {
  double mse = 0.0;
  double lyapunov_zero = 0.0;
  double lyapunov_positivity = 0.0;
  double lyapunov_descent = 0.0;

  double total() const {
    return mse + lyapunov_zero + lyapunov_positivity + lyapunov_descent;
  }
};

struct HistoryRow {
  long step = 0;
  LossBreakdown loss;
  double lr_f = 0.0;
  double lr_v = 0.0;
};

// Mean over the batch of the squared prediction-error norm.
double window_mse_loss(const MatrixXd& inputs, const MatrixXd& targets,
                       const nn::MonotoneNet& predictor);

// Mean over the batch of V(eq)^2 + [-V(x)]^+ + [V(f(window)) - V(x)]^+,
// returned as components. The predictor is treated as fixed.
LossBreakdown lyapunov_violation_loss(const MatrixXd& inputs,
                                      const MatrixXd& current_states,
                                      const nn::MonotoneNet& predictor,
                                      const nn::LyapunovNet& vnet,
                                      const VectorXd& equilibrium);

// window_mse_loss plus the mean descent hinge; the Lyapunov net is treated
// as fixed within this loss.
double combined_dynamics_loss(const MatrixXd& inputs, const MatrixXd& targets,
                              const MatrixXd& current_states,
                              const nn::MonotoneNet& predictor,
                              const nn::LyapunovNet& vnet);

struct TrainResult {
  nn::MonotoneNet predictor;
  std::optional<nn::LyapunovNet> lyapunov;
  std::vector<HistoryRow> history;
  long steps_done = 0;
};

using CheckpointHook = std::function<void(
    long step, const nn::MonotoneNet&, const nn::LyapunovNet*)>;

// The alternating loop: each step samples a batch (with replacement),
// updates the Lyapunov net against its violation loss and the predictor
// against MSE plus the descent hinge (mono_lyap), or just the MSE
// (mono_only / baseline), projecting weights afterwards in hard modes.
// Deterministic for a fixed config.
TrainResult alternating_train(const std::vector<dynamics::Trajectory>& data,
                              const TrainConfig& cfg,
                              const CheckpointHook& hook = {});

}  // namespace monodyn::training
