#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "monodyn/common.hpp"
#include "monodyn/dynamics.hpp"
#include "monodyn/net.hpp"

namespace monodyn::analysis {

// Tolerance absorbing floating-point noise in all ordering and convexity
// comparisons.
inline constexpr double kOrderSlack = 1e-9;

// ||pred - truth|| / ||truth|| over the flattened horizon. Non-finite
// predictions count as infinite error.
double normalized_l2_error(const MatrixXd& pred, const MatrixXd& truth);

// One normalized error per state dimension.
VectorXd per_dimension_errors(const MatrixXd& pred, const MatrixXd& truth);

// Samples x in the box and y = x plus a nonnegative perturbation; returns
// the fraction of pairs where some output coordinate decreases beyond the
// slack.
double monotonicity_scan(const nn::MonotoneNet& net, const VectorXd& lo,
                         const VectorXd& hi, int n_pairs, std::uint64_t seed);

struct ConvexityResult {
  double violation_rate = 0.0;
  // True when the net is max-ReLU-only with nonnegative weights, the regime
  // where zero violations are guaranteed; otherwise the rate is informative
  // only.
  bool assumptions_hold = false;
};

ConvexityResult convexity_midpoint_test(const nn::MonotoneNet& net,
                                        const VectorXd& lo, const VectorXd& hi,
                                        int n_triples, std::uint64_t seed);

bool weights_nonnegative(const nn::MonotoneNet& net);
bool hidden_max_relu_only(const nn::MonotoneNet& net);

struct BoundCheckSpec {
  double a = 1.0;
  double b = 1.0;
  double epsilon = 0.3;
  int q = 1;
  int T = 1;
  long trials = 100000;
  double eta = 1e-9;
  std::uint64_t seed = 0;
};

struct BoundCheckResult {
  std::string name;
  double empirical = 0.0;
  double bound = 0.0;
  bool pass = false;
};

// Surrogate for the T-fold composition error: true map a*x, learned map
// a*x + delta with fresh uniform [-eps, eps] noise per application. The
// empirical variance must reach the analytic lower bound
// sum_{i=1..T} a^{2(i-1)} * eps^2/3 within 5%.
BoundCheckResult composed_variance_check(const BoundCheckSpec& spec);

// Surrogate windowed ensemble: member i realizes a^i * x + delta_i with
// fresh noise per application and uniform mixing 1/q. The empirical T-step
// variance must stay under (1 + (b^2 + eps^2/3)/q) * eps^2/(3q) within 5%.
BoundCheckResult windowed_variance_check(const BoundCheckSpec& spec);

// True when the windowed predictor's variance bound improves on the
// composed one: (q + b^2 + eps^2/3)/q^2 <= sum_{i=1..T} a^{2(i-1)}.
bool window_condition(int q, double b, double epsilon, double a, int T);

// Fraction of trajectory steps with V(f(window)) < V(x(t)).
double lyapunov_descent_check(const nn::LyapunovNet& vnet,
                              const nn::MonotoneNet& predictor,
                              std::span<const dynamics::Trajectory> trajs,
                              int q);

struct Histogram {
  VectorXd centers;
  std::vector<long> counts;
  double lo = 0.0;
  double hi = 0.0;
};

// Bin counts over one layer's weights; layer_index -1 selects the output
// layer.
Histogram weight_histogram(const nn::MonotoneNet& net, int layer_index,
                           int bins);

struct EvalReport {
  std::vector<int> horizons;
  VectorXd total_errors;    // one per horizon
  MatrixXd per_dim_errors;  // dim x horizons
  double monotonicity_violation_rate = 0.0;
  double convexity_violation_rate = 0.0;
  double descent_fraction = 0.0;
  std::vector<BoundCheckResult> bound_checks;
};

}  // namespace monodyn::analysis
