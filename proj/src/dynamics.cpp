#include "monodyn/dynamics.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace monodyn::dynamics {

namespace {

void check_state(const VectorXd& x, int expected_dim, const char* who) {
  if (x.size() != expected_dim) {
    throw NumericError(std::string(who) + ": state dimension " +
                       std::to_string(x.size()) + " does not match model " +
                       std::to_string(expected_dim));
  }
  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) {
      throw NumericError(std::string(who) + ": negative state entry x[" +
                         std::to_string(i) + "] = " + std::to_string(x[i]));
    }
  }
}

// Stimulation rate g(u) = (u^p + 1) / (u^p + K) and its derivative.
double stimulation(double u, int p, double K) {
  const double up = std::pow(u, p);
  return (up + 1.0) / (up + K);
}

double stimulation_deriv(double u, int p, double K) {
  if (p == 0) return 0.0;
  const double up = std::pow(u, p);
  const double denom = up + K;
  return p * std::pow(u, p - 1) * (K - 1.0) / (denom * denom);
}

}  // namespace

void LVParams::validate() const {
  if (n_patches < 1) throw ConfigError("LV: n_patches must be >= 1");
  const std::size_t n = static_cast<std::size_t>(n_patches);
  if (a.size() != n * n * 2 || b.size() != n * 2 || c.size() != n * 2) {
    throw ConfigError("LV: coefficient array sizes do not match n_patches");
  }
  for (double v : a)
    if (v < 0.0) throw ConfigError("LV: migration rates must be >= 0");
  for (double v : b)
    if (v < 0.0) throw ConfigError("LV: death rates must be >= 0");
  for (double v : c)
    if (v < 0.0) throw ConfigError("LV: reproduction rates must be >= 0");
  if (tau <= 0.0) throw ConfigError("LV: tau must be > 0");
}

void BCCParams::validate() const {
  if (n_enzymes < 1) throw ConfigError("BCC: n_enzymes must be >= 1");
  if (alpha.size() != static_cast<std::size_t>(n_enzymes)) {
    throw ConfigError("BCC: alpha size does not match n_enzymes");
  }
  for (double v : alpha)
    if (v <= 0.0) throw ConfigError("BCC: alpha entries must be > 0");
  if (K <= 1.0) throw ConfigError("BCC: K must be > 1");
  if (p_exp < 1) throw ConfigError("BCC: p must be >= 1");
  if (tau <= 0.0) throw ConfigError("BCC: tau must be > 0");
}

VectorXd lv_step(const VectorXd& x, const LVParams& params) {
  const int n = params.n_patches;
  check_state(x, params.dim(), "lv_step");
  VectorXd y(x.size());
  for (int k = 0; k < 2; ++k) {
    const int kbar = (k + 1) % 2;
    for (int i = 0; i < n; ++i) {
      const double xi = x[k * n + i];
      const double xbar = x[kbar * n + i];
      double migration = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        migration += params.migration(j, i, k) * (x[k * n + j] - xi);
      }
      y[k * n + i] =
          xi + params.tau * (params.reproduction(i, k) * xi * xbar -
                             params.death(i, k) * xi + migration);
    }
  }
  return y;
}

VectorXd bcc_step(const VectorXd& x, const BCCParams& params) {
  const int n = params.n_enzymes;
  if (params.K <= 1.0) throw NumericError("bcc_step: K must be > 1");
  check_state(x, params.dim(), "bcc_step");
  VectorXd y(x.size());
  y[0] = x[0] + params.tau * (stimulation(x[n], params.p_exp, params.K) -
                              params.alpha[0] * x[0]);
  for (int i = 1; i <= n; ++i) {
    y[i] = x[i] + params.tau * (x[i - 1] - params.alpha[i - 1] * x[i]);
  }
  return y;
}

VectorXd step(const SystemModel& model, const VectorXd& x) {
  return std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LVParams>) return lv_step(x, p);
        else return bcc_step(x, p);
      },
      model);
}

MatrixXd jacobian(const SystemModel& model, const VectorXd& x) {
  if (const auto* lv = std::get_if<LVParams>(&model)) {
    const int n = lv->n_patches;
    check_state(x, lv->dim(), "jacobian");
    MatrixXd J = MatrixXd::Zero(x.size(), x.size());
    for (int k = 0; k < 2; ++k) {
      const int kbar = (k + 1) % 2;
      for (int i = 0; i < n; ++i) {
        const int row = k * n + i;
        double out_rate = lv->death(i, k);
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          out_rate += lv->migration(j, i, k);
          J(row, k * n + j) = lv->tau * lv->migration(j, i, k);
        }
        J(row, row) =
            1.0 + lv->tau * (lv->reproduction(i, k) * x[kbar * n + i] -
                             out_rate);
        J(row, kbar * n + i) += lv->tau * lv->reproduction(i, k) * x[k * n + i];
      }
    }
    return J;
  }
  const auto& bcc = std::get<BCCParams>(model);
  const int n = bcc.n_enzymes;
  check_state(x, bcc.dim(), "jacobian");
  MatrixXd J = MatrixXd::Zero(x.size(), x.size());
  J(0, 0) = 1.0 - bcc.tau * bcc.alpha[0];
  J(0, n) += bcc.tau * stimulation_deriv(x[n], bcc.p_exp, bcc.K);
  for (int i = 1; i <= n; ++i) {
    J(i, i) = 1.0 - bcc.tau * bcc.alpha[i - 1];
    J(i, i - 1) = bcc.tau;
  }
  return J;
}

double tau_bound(const SystemModel& model) {
  double max_rate = 0.0;
  if (const auto* lv = std::get_if<LVParams>(&model)) {
    const int n = lv->n_patches;
    for (int k = 0; k < 2; ++k) {
      for (int i = 0; i < n; ++i) {
        double rate = lv->death(i, k);
        for (int j = 0; j < n; ++j) {
          if (j != i) rate += lv->migration(j, i, k);
        }
        max_rate = std::max(max_rate, rate);
      }
    }
  } else {
    const auto& bcc = std::get<BCCParams>(model);
    for (double a : bcc.alpha) max_rate = std::max(max_rate, a);
  }
  if (max_rate == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / max_rate;
}

int state_dim(const SystemModel& model) {
  return std::visit([](const auto& p) { return p.dim(); }, model);
}

double model_tau(const SystemModel& model) {
  return std::visit([](const auto& p) { return p.tau; }, model);
}

SystemModel with_tau(SystemModel model, double tau) {
  std::visit([tau](auto& p) { p.tau = tau; }, model);
  return model;
}

VectorXd fixed_point(const SystemModel& model) {
  if (std::holds_alternative<LVParams>(model)) {
    return VectorXd::Zero(state_dim(model));
  }
  // BCC: at a fixed point the chain gives x_{i-1} = alpha_i * x_i, and the
  // mRNA row gives g(x_n) = alpha_1 * x_0. Bisect on s = x_n.
  const auto& bcc = std::get<BCCParams>(model);
  const int n = bcc.n_enzymes;
  double chain = 1.0;  // product of all alphas: x_0 = chain * x_n
  for (double a : bcc.alpha) chain *= a;
  const auto residual = [&](double s) {
    return stimulation(s, bcc.p_exp, bcc.K) - bcc.alpha[0] * chain * s;
  };
  double lo = 0.0, hi = 1.0;
  while (residual(hi) > 0.0) hi *= 2.0;  // g < 1, so a sign change exists
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0.0 ? lo : hi) = mid;
  }
  const double s = 0.5 * (lo + hi);
  VectorXd eq(bcc.dim());
  eq[n] = s;
  for (int i = n; i >= 1; --i) eq[i - 1] = bcc.alpha[i - 1] * eq[i];
  return eq;
}

Trajectory simulate(const SystemModel& model, const VectorXd& x0, int T) {
  if (T < 0) throw NumericError("simulate: T must be >= 0");
  check_state(x0, state_dim(model), "simulate");
  Trajectory traj;
  traj.states.resize(T + 1, x0.size());
  traj.states.row(0) = x0;
  VectorXd x = x0;
  for (int t = 0; t < T; ++t) {
    x = step(model, x);
    if (x.cwiseAbs().maxCoeff() > 1e12) {
      throw NumericError("simulate: state diverged at step " +
                         std::to_string(t + 1));
    }
    traj.states.row(t + 1) = x;
  }
  return traj;
}

std::vector<Trajectory> generate_dataset(const SystemModel& model,
                                         const DatasetSpec& spec) {
  if (spec.n_trajectories < 1) {
    throw ConfigError("dataset: n_trajectories must be >= 1");
  }
  if (spec.horizon < 0) throw ConfigError("dataset: horizon must be >= 0");
  if (spec.init_high < spec.init_low) {
    throw ConfigError("dataset: init_high must be >= init_low");
  }
  const int dim = state_dim(model);
  std::vector<Trajectory> out;
  out.reserve(spec.n_trajectories);
  for (int k = 0; k < spec.n_trajectories; ++k) {
    Rng rng = make_rng(spec.seed, static_cast<std::uint64_t>(k));
    VectorXd x0(dim);
    for (int i = 0; i < dim; ++i) {
      x0[i] = uniform(rng, spec.init_low, spec.init_high);
    }
    out.push_back(simulate(model, x0, spec.horizon));
  }
  return out;
}

LVParams sample_lv_params(int n_patches, std::uint64_t rate_seed, double a_lo,
                          double a_hi, double b_lo, double b_hi, double c_lo,
                          double c_hi) {
  const std::size_t n = static_cast<std::size_t>(n_patches);
  LVParams p;
  p.n_patches = n_patches;
  p.a.assign(n * n * 2, 0.0);
  p.b.assign(n * 2, 0.0);
  p.c.assign(n * 2, 0.0);
  Rng rng = make_rng(rate_seed, 0x4c56);  // "LV" stream tag
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == static_cast<std::size_t>(i)) continue;
        p.a[(k * n + i) * n + j] = uniform(rng, a_lo, a_hi);
      }
      p.b[k * n + i] = uniform(rng, b_lo, b_hi);
      p.c[k * n + i] = uniform(rng, c_lo, c_hi);
    }
  }
  p.tau = 1.0;  // caller sets the real value
  return p;
}

BCCParams sample_bcc_params(int n_enzymes, std::uint64_t rate_seed,
                            double alpha_lo, double alpha_hi, double K,
                            int p_exp) {
  BCCParams p;
  p.n_enzymes = n_enzymes;
  p.K = K;
  p.p_exp = p_exp;
  p.alpha.resize(n_enzymes);
  Rng rng = make_rng(rate_seed, 0x424343);  // "BCC" stream tag
  for (double& a : p.alpha) a = uniform(rng, alpha_lo, alpha_hi);
  p.tau = 1.0;
  return p;
}

}  // namespace monodyn::dynamics
