#include "monodyn/window.hpp"

#include <cmath>
#include <string>

namespace monodyn::window {

VectorXd Window::flatten() const {
  VectorXd out(states.size());
  for (Index i = 0; i < q(); ++i) {
    out.segment(i * dim(), dim()) = states.row(i);
  }
  return out;
}

void Window::shift_in(const VectorXd& newest) {
  if (newest.size() != dim()) {
    throw NumericError("window shift: state dimension mismatch");
  }
  for (Index i = q() - 1; i > 0; --i) {
    states.row(i) = states.row(i - 1);
  }
  states.row(0) = newest;
}

std::vector<std::pair<Window, VectorXd>> make_windows(
    const dynamics::Trajectory& traj, int q) {
  if (q < 1) throw NumericError("make_windows: q must be >= 1");
  const Index H = traj.horizon();
  if (H < q) {
    throw NumericError("make_windows: trajectory of " +
                       std::to_string(traj.states.rows()) +
                       " rows is too short for q = " + std::to_string(q));
  }
  std::vector<std::pair<Window, VectorXd>> pairs;
  pairs.reserve(static_cast<std::size_t>(H - q + 1));
  for (Index t = q - 1; t <= H - 1; ++t) {
    Window w;
    w.states.resize(q, traj.dim());
    for (Index i = 0; i < q; ++i) {
      w.states.row(i) = traj.states.row(t - i);
    }
    pairs.emplace_back(std::move(w), traj.states.row(t + 1));
  }
  return pairs;
}

WindowDataset build_dataset(std::span<const dynamics::Trajectory> trajs,
                            int q) {
  if (trajs.empty()) throw NumericError("build_dataset: no trajectories");
  const Index n = trajs.front().dim();
  Index total = 0;
  for (const auto& traj : trajs) {
    if (traj.dim() != n) {
      throw NumericError("build_dataset: trajectories have mixed dimensions");
    }
    if (traj.horizon() < q) {
      throw NumericError("build_dataset: trajectory too short for q = " +
                         std::to_string(q));
    }
    total += traj.horizon() - q + 1;
  }
  WindowDataset ds;
  ds.q = q;
  ds.dim = n;
  ds.inputs.resize(total, static_cast<Index>(q) * n);
  ds.targets.resize(total, n);
  Index row = 0;
  for (const auto& traj : trajs) {
    const Index H = traj.horizon();
    for (Index t = q - 1; t <= H - 1; ++t) {
      for (Index i = 0; i < q; ++i) {
        ds.inputs.block(row, i * n, 1, n) = traj.states.row(t - i);
      }
      ds.targets.row(row) = traj.states.row(t + 1);
      ++row;
    }
  }
  return ds;
}

void WindowEnsemble::validate() const {
  if (members.empty()) throw NumericError("ensemble: no members");
  if (mix.size() != static_cast<Index>(members.size())) {
    throw NumericError("ensemble: mix length does not match member count");
  }
  const Index n = members.front().output_dim();
  for (const auto& m : members) {
    if (m.input_dim() != n || m.output_dim() != n) {
      throw NumericError("ensemble: members must map state dim to state dim");
    }
  }
  if (bias && bias->size() != n) {
    throw NumericError("ensemble: bias dimension mismatch");
  }
  if (constrained) {
    if (std::abs(mix.sum() - 1.0) > 1e-9) {
      throw NumericError("ensemble: mix must sum to 1");
    }
    for (Index i = 0; i < mix.size(); ++i) {
      if (mix[i] < 0.0) throw NumericError("ensemble: mix must be >= 0");
    }
  }
}

VectorXd mix_from_logits(const VectorXd& logits) {
  const VectorXd shifted =
      (logits.array() - logits.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

VectorXd predict_ensemble(Window window, const WindowEnsemble& ens, int T) {
  if (T < 1) throw NumericError("predict_ensemble: T must be >= 1");
  ens.validate();
  if (window.q() != static_cast<Index>(ens.members.size()) ||
      window.dim() != ens.members.front().input_dim()) {
    throw NumericError("predict_ensemble: window does not match ensemble");
  }
  VectorXd pred;
  for (int step = 0; step < T; ++step) {
    pred = VectorXd::Zero(window.dim());
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
      const MatrixXd out = ens.members[i].forward(
          window.states.row(static_cast<Index>(i)));
      pred += ens.mix[static_cast<Index>(i)] * out.row(0).transpose();
    }
    if (ens.bias) pred += *ens.bias;
    window.shift_in(pred);
  }
  return pred;
}

VectorXd predict_meta(Window window, const nn::MonotoneNet& meta, int T) {
  if (T < 1) throw NumericError("predict_meta: T must be >= 1");
  if (meta.input_dim() != window.q() * window.dim()) {
    throw NumericError("predict_meta: meta expects input dim " +
                       std::to_string(meta.input_dim()) + ", window gives " +
                       std::to_string(window.q() * window.dim()));
  }
  VectorXd pred;
  for (int step = 0; step < T; ++step) {
    pred = meta.forward(window.flatten().transpose()).row(0).transpose();
    window.shift_in(pred);
  }
  return pred;
}

MatrixXd rollout_meta(Window window, const nn::MonotoneNet& meta, int T) {
  if (T < 1) throw NumericError("rollout_meta: T must be >= 1");
  if (meta.input_dim() != window.q() * window.dim()) {
    throw NumericError("rollout_meta: meta input dim mismatch");
  }
  MatrixXd preds(T, window.dim());
  for (int step = 0; step < T; ++step) {
    const VectorXd pred =
        meta.forward(window.flatten().transpose()).row(0).transpose();
    preds.row(step) = pred;
    window.shift_in(pred);
  }
  return preds;
}

}  // namespace monodyn::window
