#include "monodyn/training.hpp"

#include <cmath>
#include <string>

namespace monodyn::training {

namespace {

using nn::ConstraintMode;

VectorXd hinge_mask(const VectorXd& violation) {
  return (violation.array() > 0.0).cast<double>().matrix();
}

std::string breakdown_text(const LossBreakdown& b) {
  return "mse=" + std::to_string(b.mse) +
         " lyap_zero=" + std::to_string(b.lyapunov_zero) +
         " lyap_pos=" + std::to_string(b.lyapunov_positivity) +
         " lyap_descent=" + std::to_string(b.lyapunov_descent);
}

}  // namespace

void TrainConfig::validate() const {
  if (q < 1) throw ConfigError("train: q must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (method == Method::Baseline) {
    if (constraint != ConstraintMode::None) {
      throw ConfigError("train: baseline runs with constraint = none");
    }
  } else if (constraint == ConstraintMode::None) {
    throw ConfigError("train: mono methods need a constraint mode");
  }
}

double window_mse_loss(const MatrixXd& inputs, const MatrixXd& targets,
                       const nn::MonotoneNet& predictor) {
  if (inputs.rows() == 0) throw NumericError("window_mse_loss: empty batch");
  const MatrixXd pred = predictor.forward(inputs);
  return (pred - targets).rowwise().squaredNorm().mean();
}

LossBreakdown lyapunov_violation_loss(const MatrixXd& inputs,
                                      const MatrixXd& current_states,
                                      const nn::MonotoneNet& predictor,
                                      const nn::LyapunovNet& vnet,
                                      const VectorXd& equilibrium) {
  if (inputs.rows() == 0) {
    throw NumericError("lyapunov_violation_loss: empty batch");
  }
  const double v_eq = vnet.value(equilibrium);
  const VectorXd v_x = vnet.value(current_states);
  const VectorXd v_f = vnet.value(predictor.forward(inputs));
  LossBreakdown out;
  out.lyapunov_zero = v_eq * v_eq;
  out.lyapunov_positivity = (-v_x).cwiseMax(0.0).mean();
  out.lyapunov_descent = (v_f - v_x).cwiseMax(0.0).mean();
  return out;
}

double combined_dynamics_loss(const MatrixXd& inputs, const MatrixXd& targets,
                              const MatrixXd& current_states,
                              const nn::MonotoneNet& predictor,
                              const nn::LyapunovNet& vnet) {
  if (inputs.rows() == 0) {
    throw NumericError("combined_dynamics_loss: empty batch");
  }
  const MatrixXd pred = predictor.forward(inputs);
  const double mse = (pred - targets).rowwise().squaredNorm().mean();
  const VectorXd v_f = vnet.value(pred);
  const VectorXd v_x = vnet.value(current_states);
  return mse + (v_f - v_x).cwiseMax(0.0).mean();
}

TrainResult alternating_train(const std::vector<dynamics::Trajectory>& data,
                              const TrainConfig& cfg,
                              const CheckpointHook& hook) {
  cfg.validate();
  const window::WindowDataset ds = window::build_dataset(data, cfg.q);
  const Index n = ds.dim;
  const Index N = ds.size();

  Rng rng = make_rng(cfg.seed, 0x7261696e);  // training stream

  nn::NetSpec fspec;
  fspec.input_dim = static_cast<Index>(cfg.q) * n;
  fspec.hidden = cfg.hidden;
  fspec.output_dim = n;
  fspec.min_relu_fraction = cfg.min_relu_fraction;
  fspec.mode = cfg.method == Method::Baseline ? ConstraintMode::None
                                              : cfg.constraint;
  fspec.batch_norm = fspec.mode == ConstraintMode::BnSoft;
  nn::MonotoneNet f = nn::make_net(fspec, rng);

  std::optional<nn::LyapunovNet> vnet;
  const bool project_v = cfg.v_constraint == ConstraintMode::HardZero ||
                         cfg.v_constraint == ConstraintMode::HardSmallRandom;
  if (cfg.method == Method::MonoLyap) {
    const auto& vh = cfg.v_hidden.empty() ? cfg.hidden : cfg.v_hidden;
    vnet = nn::make_lyapunov_net(n, vh, n, cfg.min_relu_fraction,
                                 cfg.v_constraint, rng);
  }
  VectorXd eq = cfg.equilibrium;
  if (eq.size() == 0) eq = VectorXd::Zero(n);
  if (eq.size() != n) {
    throw ConfigError("train: equilibrium dimension does not match data");
  }
  const MatrixXd eq_row = eq.transpose();

  nn::AdamConfig f_adam_cfg{cfg.lr_f,         cfg.decay_rate,
                            cfg.decay_interval, cfg.weight_decay};
  nn::AdamConfig v_adam_cfg{cfg.lr_v,         cfg.decay_rate,
                            cfg.decay_interval, cfg.weight_decay};
  nn::Adam adam_f(f_adam_cfg);
  nn::Adam adam_v(v_adam_cfg);

  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(cfg.epochs));

  std::uniform_int_distribution<Index> pick(0, N - 1);
  const Index B = cfg.batch;
  MatrixXd bx(B, ds.inputs.cols());
  MatrixXd by(B, n);

  const bool project =
      fspec.mode == ConstraintMode::HardZero ||
      fspec.mode == ConstraintMode::HardSmallRandom;

  for (long step = 0; step < cfg.epochs; ++step) {
    for (Index r = 0; r < B; ++r) {
      const Index idx = pick(rng);
      bx.row(r) = ds.inputs.row(idx);
      by.row(r) = ds.targets.row(idx);
    }
    const MatrixXd bc = bx.leftCols(n);  // current states x(t)

    LossBreakdown loss;

    if (vnet) {
      const UpdateOrder order = cfg.order;
      const auto v_update = [&] {
        // Lyapunov step: the predictor is fixed; only value gradients of
        // the three violation terms reach the Lyapunov parameters.
        nn::ForwardCache fcache;
        const MatrixXd fpred = f.forward_train(bx, fcache, false);
        auto vgrads = vnet->zero_grads();

        nn::LyapunovNet::Cache c_eq, c_x, c_f;
        const VectorXd v_eq = vnet->value_train(eq_row, c_eq);
        const VectorXd v_x = vnet->value_train(bc, c_x);
        const VectorXd v_f = vnet->value_train(fpred, c_f);

        loss.lyapunov_zero = v_eq[0] * v_eq[0];
        loss.lyapunov_positivity = (-v_x).cwiseMax(0.0).mean();
        loss.lyapunov_descent = (v_f - v_x).cwiseMax(0.0).mean();

        const double inv_b = 1.0 / static_cast<double>(B);
        const VectorXd descent_mask = hinge_mask(v_f - v_x);
        VectorXd d_eq(1);
        d_eq[0] = 2.0 * v_eq[0];
        // [-v]^+ differentiates to -1 where v < 0; the descent hinge pulls
        // v_x up and v_f down where violated.
        const VectorXd d_x = inv_b * (-hinge_mask(-v_x) - descent_mask);
        const VectorXd d_f = inv_b * descent_mask;
        vnet->backward(c_eq, d_eq, &vgrads);
        vnet->backward(c_x, d_x, &vgrads);
        vnet->backward(c_f, d_f, &vgrads);
        adam_v.step(vnet->param_views(), nn::LyapunovNet::grad_views(vgrads));
        if (project_v) vnet->project_nonnegative(rng);
      };
      const auto f_update = [&] {
        nn::ForwardCache fcache;
        const MatrixXd fpred = f.forward_train(bx, fcache, true);
        const MatrixXd err = fpred - by;
        loss.mse = err.rowwise().squaredNorm().mean();

        nn::LyapunovNet::Cache c_f, c_x;
        const VectorXd v_f = vnet->value_train(fpred, c_f, false);
        const VectorXd v_x = vnet->value_train(bc, c_x, false);
        const VectorXd descent_mask = hinge_mask(v_f - v_x);

        MatrixXd d_pred = (2.0 / static_cast<double>(B)) * err;
        // Descent hinge reaches the predictor through the Lyapunov input.
        MatrixXd d_from_v;
        vnet->backward(c_f, descent_mask / static_cast<double>(B), nullptr,
                       &d_from_v);
        d_pred += d_from_v;

        auto fgrads = f.zero_grads();
        f.backward(fcache, d_pred, &fgrads);
        adam_f.step(f.param_views(), nn::MonotoneNet::grad_views(fgrads));
        if (project) f.project_nonnegative(rng);
      };
      if (order == UpdateOrder::VFirst) {
        v_update();
        f_update();
      } else {
        f_update();
        v_update();
      }
    } else {
      nn::ForwardCache fcache;
      const MatrixXd fpred = f.forward_train(bx, fcache, true);
      const MatrixXd err = fpred - by;
      loss.mse = err.rowwise().squaredNorm().mean();
      const MatrixXd d_pred = (2.0 / static_cast<double>(B)) * err;
      auto fgrads = f.zero_grads();
      f.backward(fcache, d_pred, &fgrads);
      adam_f.step(f.param_views(), nn::MonotoneNet::grad_views(fgrads));
      if (project) f.project_nonnegative(rng);
    }

    if (!std::isfinite(loss.total())) {
      throw NumericError("training diverged at step " + std::to_string(step) +
                         ": " + breakdown_text(loss));
    }
    const double decay_factor = std::pow(
        cfg.decay_rate, static_cast<double>(step / cfg.decay_interval));
    result.history.push_back({step, loss, cfg.lr_f * decay_factor,
                              vnet ? cfg.lr_v * decay_factor : 0.0});

    if (hook && cfg.checkpoint_interval > 0 &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      hook(step + 1, f, vnet ? &*vnet : nullptr);
    }
    result.steps_done = step + 1;
  }

  result.predictor = std::move(f);
  result.lyapunov = std::move(vnet);
  return result;
}

}  // namespace monodyn::training
