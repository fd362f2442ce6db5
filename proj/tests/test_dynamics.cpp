#include <doctest.h>

#include <cmath>
#include <limits>

#include "monodyn/dynamics.hpp"

using namespace monodyn;
using namespace monodyn::dynamics;

namespace {

// Central finite differences, kept independent of the analytic Jacobian it
// checks.
MatrixXd fd_jacobian_oracle(const SystemModel& model, const VectorXd& x,
                            double h = 1e-6) {
  const Index n = x.size();
  MatrixXd J(n, n);
  for (Index j = 0; j < n; ++j) {
    VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] = std::max(0.0, xm[j] - h);
    J.col(j) = (step(model, xp) - step(model, xm)) / (xp[j] - xm[j]);
  }
  return J;
}

LVParams uniform_lv(int n, double a, double b, double c, double tau) {
  LVParams p;
  p.n_patches = n;
  const std::size_t un = static_cast<std::size_t>(n);
  p.a.assign(un * un * 2, a);
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < n; ++i) {
      p.a[(static_cast<std::size_t>(k) * un + i) * un + i] = 0.0;
    }
  }
  p.b.assign(un * 2, b);
  p.c.assign(un * 2, c);
  p.tau = tau;
  return p;
}

BCCParams simple_bcc(int n, double alpha, double K, int p_exp, double tau) {
  BCCParams p;
  p.n_enzymes = n;
  p.alpha.assign(static_cast<std::size_t>(n), alpha);
  p.K = K;
  p.p_exp = p_exp;
  p.tau = tau;
  return p;
}

VectorXd random_positive_state(Rng& rng, int dim, double hi = 1.0) {
  VectorXd x(dim);
  for (int i = 0; i < dim; ++i) x[i] = uniform(rng, 0.0, hi);
  return x;
}

}  // namespace

TEST_CASE("lv_step at the origin and with tau zero") {
  LVParams p = uniform_lv(2, 1.0, 1.0, 1.0, 0.1);
  CHECK(lv_step(VectorXd::Zero(4), p).isZero(0.0));

  // tau = 0 bypasses validate(); the step map itself is the identity.
  p.tau = 0.0;
  VectorXd x(4);
  x << 0.3, 0.1, 0.7, 0.2;
  CHECK((lv_step(x, p) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lv_step single patch hand evaluation") {
  LVParams p = uniform_lv(1, 0.0, 0.0, 1.0, 0.1);
  VectorXd x(2);
  x << 2.0, 3.0;
  const VectorXd y = lv_step(x, p);
  CHECK(y[0] == doctest::Approx(2.6));
  CHECK(y[1] == doctest::Approx(3.6));
}

TEST_CASE("lv_step rejects bad input") {
  LVParams p = uniform_lv(2, 1.0, 1.0, 1.0, 0.1);
  CHECK_THROWS_AS(lv_step(VectorXd::Zero(3), p), NumericError);
  VectorXd neg(4);
  neg << 0.1, -0.2, 0.3, 0.4;
  CHECK_THROWS_AS(lv_step(neg, p), NumericError);
}

TEST_CASE("bcc_step identity at tau zero and origin update") {
  BCCParams p = simple_bcc(3, 1.0, 2.0, 1, 0.0);
  VectorXd x(4);
  x << 0.5, 0.25, 0.75, 0.1;
  CHECK((bcc_step(x, p) - x).cwiseAbs().maxCoeff() == 0.0);

  p.tau = 0.5;
  const VectorXd y = bcc_step(VectorXd::Zero(4), p);
  CHECK(y[0] == doctest::Approx(0.25));
  CHECK(y.tail(3).isZero(0.0));
}

TEST_CASE("bcc fixed point solves the chain equations") {
  BCCParams p = simple_bcc(4, 1.0, 8.0, 10, 0.05);
  const VectorXd eq = fixed_point(SystemModel{p});
  // Uniform alphas give a uniform fixed point; bcc_step must hold it.
  for (Index i = 1; i < eq.size(); ++i) {
    CHECK(eq[i] == doctest::Approx(eq[0]).epsilon(1e-12));
  }
  const VectorXd next = bcc_step(eq, p);
  CHECK((next - eq).cwiseAbs().maxCoeff() < 1e-12);
  // The stationarity conditions named by the chain: x_{i-1} = x_i and
  // g(x_n) = x_1 at the uniform state.
  const double s = eq[eq.size() - 1];
  const double g = (std::pow(s, 10) + 1.0) / (std::pow(s, 10) + 8.0);
  CHECK(g == doctest::Approx(eq[1]).epsilon(1e-10));
}

TEST_CASE("analytic jacobians match the finite-difference oracle") {
  Rng rng = make_rng(42);
  const SystemModel lv{uniform_lv(3, 0.8, 1.5, 0.6, 0.05)};
  const SystemModel bcc{simple_bcc(4, 2.0, 8.0, 3, 0.05)};
  for (const auto& model : {lv, bcc}) {
    for (int k = 0; k < 100; ++k) {
      const VectorXd x = random_positive_state(rng, state_dim(model));
      const MatrixXd J = jacobian(model, x);
      const MatrixXd Jfd = fd_jacobian_oracle(model, x);
      const double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
      CHECK((J - Jfd).cwiseAbs().maxCoeff() / scale < 1e-5);
    }
  }
}

TEST_CASE("jacobian closed-form entries") {
  const BCCParams bcc = simple_bcc(3, 2.0, 8.0, 2, 0.1);
  VectorXd x(4);
  x << 0.5, 0.4, 0.3, 0.2;
  const MatrixXd J = jacobian(SystemModel{bcc}, x);
  for (int i = 1; i <= 3; ++i) {
    CHECK(J(i, i) == doctest::Approx(1.0 - 0.1 * 2.0));
    CHECK(J(i, i - 1) == doctest::Approx(0.1));
  }

  const LVParams lv = uniform_lv(3, 0.7, 1.0, 0.5, 0.05);
  const MatrixXd Jlv = jacobian(SystemModel{lv}, VectorXd::Constant(6, 0.5));
  // Same-group migration entry: tau * a_{jik} for j != i.
  CHECK(Jlv(0, 1) == doctest::Approx(0.05 * 0.7));
  CHECK(Jlv(4, 5) == doctest::Approx(0.05 * 0.7));
  // Cross-group entry: tau * c_{ik} * x_{ik}.
  CHECK(Jlv(0, 3) == doctest::Approx(0.05 * 0.5 * 0.5));
}

TEST_CASE("tau_bound formulas and the infinity sentinel") {
  // Two patches, unit migration and death: 1/(1 + 1) = 0.5.
  CHECK(tau_bound(SystemModel{uniform_lv(2, 1.0, 1.0, 1.0, 0.1)}) ==
        doctest::Approx(0.5));
  BCCParams p = simple_bcc(3, 1.0, 2.0, 1, 0.01);
  p.alpha = {10.0, 2.0, 1.0};
  CHECK(tau_bound(SystemModel{p}) == doctest::Approx(0.1));
  p.alpha = {0.0, 0.0, 0.0};
  CHECK(std::isinf(tau_bound(SystemModel{p})));
  LVParams zero = uniform_lv(2, 0.0, 0.0, 1.0, 0.1);
  CHECK(std::isinf(tau_bound(SystemModel{zero})));
}

TEST_CASE("jacobian positivity below the bound and a witness above it") {
  Rng rng = make_rng(7);
  const SystemModel models[] = {
      SystemModel{uniform_lv(2, 1.2, 2.0, 0.8, 1.0)},
      SystemModel{simple_bcc(4, 3.0, 8.0, 4, 1.0)}};
  for (const auto& base : models) {
    const double bound = tau_bound(base);
    const auto below = with_tau(base, 0.5 * bound);
    const auto above = with_tau(base, 2.0 * bound);
    double min_below = std::numeric_limits<double>::infinity();
    double min_above = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 100; ++k) {
      const VectorXd x = random_positive_state(rng, state_dim(base));
      min_below = std::min(min_below, jacobian(below, x).minCoeff());
      min_above = std::min(min_above, jacobian(above, x).minCoeff());
    }
    CHECK(min_below >= -1e-9);
    CHECK(min_above < 0.0);
  }
}

TEST_CASE("simulate basics and trajectory order preservation") {
  const SystemModel lv{uniform_lv(1, 0.0, 0.0, 1.0, 0.1)};
  VectorXd x0(2);
  x0 << 2.0, 3.0;
  SUBCASE("T = 0 returns only the initial state") {
    const Trajectory t = simulate(lv, x0, 0);
    CHECK(t.states.rows() == 1);
    CHECK(t.horizon() == 0);
  }
  SUBCASE("rows compose the step map") {
    const Trajectory t = simulate(lv, x0, 2);
    const VectorXd once = lv_step(x0, std::get<LVParams>(lv));
    const VectorXd twice = lv_step(once, std::get<LVParams>(lv));
    CHECK((t.states.row(1).transpose() - once).norm() == 0.0);
    CHECK((t.states.row(2).transpose() - twice).norm() == 0.0);
  }
  SUBCASE("identical inputs give identical trajectories") {
    const Trajectory a = simulate(lv, x0, 5);
    const Trajectory b = simulate(lv, x0, 5);
    CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("ordered initial states stay ordered below the tau bound") {
  const SystemModel base{uniform_lv(2, 1.0, 2.5, 0.7, 1.0)};
  const auto model = with_tau(base, 0.5 * tau_bound(base));
  Rng rng = make_rng(11);
  for (int pair = 0; pair < 100; ++pair) {
    const VectorXd x0 = random_positive_state(rng, 4);
    VectorXd y0 = x0;
    for (int i = 0; i < 4; ++i) y0[i] += uniform(rng, 0.0, 0.5);
    const Trajectory tx = simulate(model, x0, 200);
    const Trajectory ty = simulate(model, y0, 200);
    CHECK(((ty.states - tx.states).array() >= -1e-9).all());
  }
}

TEST_CASE("simulate reports divergence with the step index") {
  // Strong reproduction, no death: grows past the guard.
  LVParams p = uniform_lv(1, 0.0, 0.0, 5.0, 0.9);
  VectorXd x0(2);
  x0 << 10.0, 10.0;
  CHECK_THROWS_WITH_AS(simulate(SystemModel{p}, x0, 100000),
                       doctest::Contains("diverged at step"), NumericError);
}

TEST_CASE("generate_dataset shape, determinism, and degenerate horizon") {
  const SystemModel model{uniform_lv(2, 1.0, 2.5, 0.7, 0.05)};
  DatasetSpec spec;
  spec.n_trajectories = 20;
  spec.horizon = 5000;
  spec.seed = 9;
  const auto data = generate_dataset(model, spec);
  CHECK(data.size() == 20);
  for (const auto& t : data) {
    CHECK(t.states.rows() == 5001);
    CHECK(t.dim() == 4);
    CHECK((t.states.array() >= 0.0).all());
  }
  const auto again = generate_dataset(model, spec);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK((data[i].states - again[i].states).cwiseAbs().maxCoeff() == 0.0);
  }

  spec.horizon = 0;
  spec.n_trajectories = 3;
  for (const auto& t : generate_dataset(model, spec)) {
    CHECK(t.states.rows() == 1);
  }
}

TEST_CASE("parameter validation rejects bad models") {
  LVParams lv = uniform_lv(2, 1.0, 1.0, 1.0, 0.1);
  lv.b[1] = -0.5;
  CHECK_THROWS_AS(lv.validate(), ConfigError);
  BCCParams bcc = simple_bcc(2, 1.0, 0.5, 1, 0.1);
  CHECK_THROWS_AS(bcc.validate(), ConfigError);  // K <= 1
}
