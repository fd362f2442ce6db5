#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "monodyn/common.hpp"

namespace monodyn::dynamics {

// Time-indexed sequence of states; row t holds x(t), so a horizon-H run has
// H+1 rows. Time is discrete and unitless.
struct Trajectory {
  MatrixXd states;

  Index horizon() const { return states.rows() - 1; }
  Index dim() const { return states.cols(); }
};

// Two cooperative groups migrating over n patches. State layout is
// group-major: dimension k*n + i holds group k at patch i.
struct LVParams {
  int n_patches = 1;
  // Migration rates a(j -> i) for group k, stored as a[(k*n + i)*n + j];
  // the diagonal j == i is unused and kept at zero.
  std::vector<double> a;
  std::vector<double> b;  // death rates, b[k*n + i]
  std::vector<double> c;  // reproduction rates, c[k*n + i]
  double tau = 0.0;

  int dim() const { return 2 * n_patches; }
  double migration(int j, int i, int k) const {
    return a[(static_cast<std::size_t>(k) * n_patches + i) * n_patches + j];
  }
  double death(int i, int k) const {
    return b[static_cast<std::size_t>(k) * n_patches + i];
  }
  double reproduction(int i, int k) const {
    return c[static_cast<std::size_t>(k) * n_patches + i];
  }
  void validate() const;
};

// Chain of n enzymes synthesizing an end product that stimulates creation of
// the mRNA x0. State is (x0, x1, ..., xn), dimension n+1.
struct BCCParams {
  int n_enzymes = 1;
  std::vector<double> alpha;  // alpha[i-1] is the rate for enzyme i
  double K = 2.0;
  int p_exp = 1;
  double tau = 0.0;

  int dim() const { return n_enzymes + 1; }
  void validate() const;
};

using SystemModel = std::variant<LVParams, BCCParams>;

struct DatasetSpec {
  int n_trajectories = 20;
  int horizon = 5000;
  double init_low = 0.0;  // entrywise uniform initial-state sampler
  double init_high = 1.0;
  std::uint64_t seed = 0;
};

VectorXd lv_step(const VectorXd& x, const LVParams& params);
VectorXd bcc_step(const VectorXd& x, const BCCParams& params);
VectorXd step(const SystemModel& model, const VectorXd& x);

// Analytic Jacobian of the one-step map at x.
MatrixXd jacobian(const SystemModel& model, const VectorXd& x);

// Supremum of the monotonicity-preserving time step; +infinity when the rate
// denominators are all zero.
double tau_bound(const SystemModel& model);

int state_dim(const SystemModel& model);
double model_tau(const SystemModel& model);
SystemModel with_tau(SystemModel model, double tau);

// Asymptotically stable point of the model: the origin for LV, the solved
// chain fixed point for BCC.
VectorXd fixed_point(const SystemModel& model);

// Iterates the step map T times. Aborts with the step index if any state
// entry exceeds 1e12 in magnitude.
Trajectory simulate(const SystemModel& model, const VectorXd& x0, int T);

std::vector<Trajectory> generate_dataset(const SystemModel& model,
                                         const DatasetSpec& spec);

// Uniform [lo, hi] coefficient sampling used by the shipped configurations.
LVParams sample_lv_params(int n_patches, std::uint64_t rate_seed, double a_lo,
                          double a_hi, double b_lo, double b_hi, double c_lo,
                          double c_hi);
BCCParams sample_bcc_params(int n_enzymes, std::uint64_t rate_seed,
                            double alpha_lo, double alpha_hi, double K,
                            int p_exp);

}  // namespace monodyn::dynamics
