#include "monodyn/analysis.hpp"

#include <cmath>
#include <limits>

#include "monodyn/window.hpp"

namespace monodyn::analysis {

namespace {

VectorXd sample_box(Rng& rng, const VectorXd& lo, const VectorXd& hi) {
  VectorXd x(lo.size());
  for (Index i = 0; i < x.size(); ++i) x[i] = uniform(rng, lo[i], hi[i]);
  return x;
}

double sample_variance(const VectorXd& values) {
  const double mean = values.mean();
  return (values.array() - mean).square().sum() /
         static_cast<double>(values.size() - 1);
}

// sum_{i=1..T} a^{2(i-1)}, with the i = 1 term equal to 1 even for a = 0.
double geometric_error_sum(double a, int T) {
  double sum = 0.0;
  double term = 1.0;
  for (int i = 0; i < T; ++i) {
    sum += term;
    term *= a * a;
  }
  return sum;
}

void require_trials(const BoundCheckSpec& spec, const char* who) {
  if (spec.trials < 10000) {
    throw NumericError(std::string(who) +
                       ": needs at least 1e4 trials for the 5% tolerance");
  }
  if (spec.epsilon < 0.0) {
    throw NumericError(std::string(who) + ": epsilon must be >= 0");
  }
  if (spec.T < 1) throw NumericError(std::string(who) + ": T must be >= 1");
}

}  // namespace

double normalized_l2_error(const MatrixXd& pred, const MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw NumericError("normalized_l2_error: shape mismatch");
  }
  const double denom = truth.norm();
  if (denom == 0.0) {
    throw NumericError("normalized_l2_error: truth has zero norm");
  }
  if (!pred.allFinite()) return std::numeric_limits<double>::infinity();
  return (pred - truth).norm() / denom;
}

VectorXd per_dimension_errors(const MatrixXd& pred, const MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw NumericError("per_dimension_errors: shape mismatch");
  }
  VectorXd out(truth.cols());
  for (Index j = 0; j < truth.cols(); ++j) {
    const double denom = truth.col(j).norm();
    if (denom == 0.0) {
      throw NumericError("per_dimension_errors: dimension " +
                         std::to_string(j) + " of truth has zero norm");
    }
    out[j] = pred.col(j).allFinite()
                 ? (pred.col(j) - truth.col(j)).norm() / denom
                 : std::numeric_limits<double>::infinity();
  }
  return out;
}

double monotonicity_scan(const nn::MonotoneNet& net, const VectorXd& lo,
                         const VectorXd& hi, int n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw NumericError("monotonicity_scan: n_pairs must be >= 1");
  if (lo.size() != net.input_dim() || hi.size() != net.input_dim()) {
    throw NumericError("monotonicity_scan: box dimension mismatch");
  }
  Rng rng = make_rng(seed, 0x6d6f6e6f);
  long violations = 0;
  for (int k = 0; k < n_pairs; ++k) {
    const VectorXd x = sample_box(rng, lo, hi);
    VectorXd y = x;
    for (Index i = 0; i < y.size(); ++i) {
      y[i] += uniform(rng, 0.0, hi[i] - lo[i]);
    }
    const VectorXd fx = net.forward(x.transpose()).row(0);
    const VectorXd fy = net.forward(y.transpose()).row(0);
    if (((fx - fy).array() > kOrderSlack).any()) ++violations;
  }
  return static_cast<double>(violations) / static_cast<double>(n_pairs);
}

bool weights_nonnegative(const nn::MonotoneNet& net) {
  for (const auto& layer : net.layers()) {
    if ((layer.weight.array() < 0.0).any()) return false;
    if (layer.bn && (layer.bn->gamma.array() < 0.0).any()) return false;
  }
  return true;
}

bool hidden_max_relu_only(const nn::MonotoneNet& net) {
  for (const auto& layer : net.layers()) {
    for (auto a : layer.act) {
      if (a == nn::Activation::MinRelu) return false;
    }
  }
  return true;
}

ConvexityResult convexity_midpoint_test(const nn::MonotoneNet& net,
                                        const VectorXd& lo, const VectorXd& hi,
                                        int n_triples, std::uint64_t seed) {
  if (n_triples < 1) {
    throw NumericError("convexity_midpoint_test: n_triples must be >= 1");
  }
  if (lo.size() != net.input_dim() || hi.size() != net.input_dim()) {
    throw NumericError("convexity_midpoint_test: box dimension mismatch");
  }
  ConvexityResult result;
  result.assumptions_hold =
      hidden_max_relu_only(net) && weights_nonnegative(net);
  Rng rng = make_rng(seed, 0x636f6e76);
  long violations = 0;
  for (int k = 0; k < n_triples; ++k) {
    const VectorXd x1 = sample_box(rng, lo, hi);
    const VectorXd x2 = sample_box(rng, lo, hi);
    const VectorXd mid = 0.5 * (x1 + x2);
    const VectorXd f1 = net.forward(x1.transpose()).row(0);
    const VectorXd f2 = net.forward(x2.transpose()).row(0);
    const VectorXd fm = net.forward(mid.transpose()).row(0);
    if ((fm.array() > 0.5 * (f1 + f2).array() + kOrderSlack).any()) {
      ++violations;
    }
  }
  result.violation_rate =
      static_cast<double>(violations) / static_cast<double>(n_triples);
  return result;
}

BoundCheckResult composed_variance_check(const BoundCheckSpec& spec) {
  require_trials(spec, "composed_variance_check");
  Rng rng = make_rng(spec.seed, 0x6c656d32);
  std::uniform_real_distribution<double> noise(-spec.epsilon, spec.epsilon);
  VectorXd errors(spec.trials);
  for (long trial = 0; trial < spec.trials; ++trial) {
    double e = 0.0;
    for (int i = 0; i < spec.T; ++i) {
      e = spec.a * e - noise(rng);
    }
    errors[trial] = e;
  }
  BoundCheckResult out;
  out.name = "composed_variance_lower_bound";
  out.empirical = spec.epsilon == 0.0 ? 0.0 : sample_variance(errors);
  out.bound =
      geometric_error_sum(spec.a, spec.T) * spec.epsilon * spec.epsilon / 3.0;
  out.pass = out.empirical >= out.bound * (1.0 - 0.05);
  return out;
}

BoundCheckResult windowed_variance_check(const BoundCheckSpec& spec) {
  require_trials(spec, "windowed_variance_check");
  if (spec.q < 1) throw NumericError("windowed_variance_check: q must be >= 1");
  // Uniform mixing realizes condition (i) exactly.
  if (spec.eta < 0.0) {
    throw NumericError("windowed_variance_check: eta must be >= 0");
  }
  Rng rng = make_rng(spec.seed, 0x74686d31);
  std::uniform_real_distribution<double> noise(-spec.epsilon, spec.epsilon);
  const int q = spec.q;
  VectorXd apow(q);
  for (int i = 0; i < q; ++i) apow[i] = std::pow(spec.a, i + 1);
  VectorXd errors(spec.trials);
  VectorXd slots(q);
  for (long trial = 0; trial < spec.trials; ++trial) {
    slots.setZero();  // the initial window holds true states
    for (int step = 0; step < spec.T; ++step) {
      double acc = 0.0;
      for (int i = 0; i < q; ++i) {
        acc += apow[i] * slots[i] + noise(rng);
      }
      const double e_new = acc / static_cast<double>(q);
      for (int i = q - 1; i > 0; --i) slots[i] = slots[i - 1];
      slots[0] = e_new;
    }
    errors[trial] = slots[0];
  }
  BoundCheckResult out;
  out.name = "windowed_variance_upper_bound";
  out.empirical = spec.epsilon == 0.0 ? 0.0 : sample_variance(errors);
  const double eps2_3 = spec.epsilon * spec.epsilon / 3.0;
  out.bound = (1.0 + (spec.b * spec.b + eps2_3) / q) * eps2_3 / q;
  out.pass = out.empirical <= out.bound * (1.0 + 0.05);
  return out;
}

bool window_condition(int q, double b, double epsilon, double a, int T) {
  if (q < 1) throw NumericError("window_condition: q must be >= 1");
  const double lhs =
      (q + b * b + epsilon * epsilon / 3.0) / (static_cast<double>(q) * q);
  return lhs <= geometric_error_sum(a, T);
}

double lyapunov_descent_check(const nn::LyapunovNet& vnet,
                              const nn::MonotoneNet& predictor,
                              std::span<const dynamics::Trajectory> trajs,
                              int q) {
  if (trajs.empty()) throw NumericError("lyapunov_descent_check: no input");
  const window::WindowDataset ds = window::build_dataset(trajs, q);
  const MatrixXd pred = predictor.forward(ds.inputs);
  const MatrixXd current = ds.inputs.leftCols(ds.dim);
  const VectorXd v_next = vnet.value(pred);
  const VectorXd v_now = vnet.value(current);
  long descents = 0;
  for (Index i = 0; i < v_now.size(); ++i) {
    if (v_next[i] < v_now[i]) ++descents;
  }
  return static_cast<double>(descents) / static_cast<double>(v_now.size());
}

Histogram weight_histogram(const nn::MonotoneNet& net, int layer_index,
                           int bins) {
  if (bins < 1) throw NumericError("weight_histogram: bins must be >= 1");
  const int n_layers = static_cast<int>(net.layers().size());
  if (layer_index == -1) layer_index = n_layers - 1;
  if (layer_index < 0 || layer_index >= n_layers) {
    throw NumericError("weight_histogram: no layer " +
                       std::to_string(layer_index));
  }
  const MatrixXd& w = net.layers()[static_cast<std::size_t>(layer_index)].weight;
  Histogram h;
  h.lo = w.minCoeff();
  h.hi = w.maxCoeff();
  if (h.lo == h.hi) {  // degenerate range: a unit-wide window around it
    h.lo -= 0.5;
    h.hi += 0.5;
  }
  const double width = (h.hi - h.lo) / bins;
  h.centers.resize(bins);
  for (int i = 0; i < bins; ++i) h.centers[i] = h.lo + (i + 0.5) * width;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (Index i = 0; i < w.size(); ++i) {
    int bin = static_cast<int>((w.data()[i] - h.lo) / width);
    bin = std::min(std::max(bin, 0), bins - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

}  // namespace monodyn::analysis
