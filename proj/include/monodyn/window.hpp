#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "monodyn/common.hpp"
#include "monodyn/dynamics.hpp"
#include "monodyn/net.hpp"

namespace monodyn::window {

// The q most recent states, newest first: row 0 holds x(t), row q-1 holds
// x(t-q+1).
struct Window {
  MatrixXd states;  // q x n

  Index q() const { return states.rows(); }
  Index dim() const { return states.cols(); }

  // Flattened newest-first layout consumed by the meta network.
  VectorXd flatten() const;

  // Drops the oldest state and inserts the prediction at the newest slot.
  void shift_in(const VectorXd& newest);
};

// One training pair per t in [q-1, H-1]: the window ending at t and the
// target x(t+1).
std::vector<std::pair<Window, VectorXd>> make_windows(
    const dynamics::Trajectory& traj, int q);

// Pooled flattened training pairs across trajectories. The current state
// x(t) of each row is its leading dim columns.
struct WindowDataset {
  MatrixXd inputs;   // N x (q*n), newest first
  MatrixXd targets;  // N x n
  Index q = 0;
  Index dim = 0;

  Index size() const { return inputs.rows(); }
};

WindowDataset build_dataset(std::span<const dynamics::Trajectory> trajs,
                            int q);

// Explicit q-member ensemble: member i consumes the state i-1 steps old.
struct WindowEnsemble {
  std::vector<nn::MonotoneNet> members;
  VectorXd mix;                  // p_1..p_q
  std::optional<VectorXd> bias;  // z
  bool constrained = true;       // enforce the simplex constraint on mix

  void validate() const;
};

// Simplex parameterization of the mixing weights.
VectorXd mix_from_logits(const VectorXd& logits);

// Recursive T-step prediction: combine the members over the window, shift
// the prediction in, repeat. Returns the final predicted state.
VectorXd predict_ensemble(Window window, const WindowEnsemble& ens, int T);

// Same recursion driven by the meta network over the flattened window.
VectorXd predict_meta(Window window, const nn::MonotoneNet& meta, int T);

// All T intermediate predictions as rows (x-hat(t+1) ... x-hat(t+T)).
MatrixXd rollout_meta(Window window, const nn::MonotoneNet& meta, int T);

}  // namespace monodyn::window
