#pragma once

#include "monodyn/analysis.hpp"
#include "monodyn/config.hpp"

namespace monodyn::cli {

struct RunOptions {
  bool overwrite = false;
};

// Executes one command, writing its artifacts under cfg.paths.out. A
// ".incomplete" marker exists in the output directory while a command is in
// flight and is removed on success. Throws Config/Numeric/IoError on
// failure; the CLI maps those onto exit codes.
void run(const RunConfig& cfg, const RunOptions& opts = {});

// Shared helpers, also used by the evaluation command and tests.
dynamics::Trajectory held_out_trajectory(const RunConfig& cfg, int min_rows);
VectorXd resolve_equilibrium(const RunConfig& cfg);

struct EvaluationArtifacts {
  analysis::EvalReport report;
  MatrixXd predictions;  // rows t = q .. q+T_max
  MatrixXd truth_slice;  // matching truth rows
  analysis::Histogram output_weight_hist;
  double output_weight_min = 0.0;
  double output_weight_max = 0.0;
};

EvaluationArtifacts evaluate_predictor(const RunConfig& cfg,
                                       const nn::MonotoneNet& predictor,
                                       const nn::LyapunovNet* vnet);

// The shipped verification presets: simulator Jacobian positivity and
// finite-difference agreement, constrained-net property scans, both
// Monte-Carlo variance bounds, and the window-condition examples.
std::vector<analysis::BoundCheckResult> verification_presets(
    std::uint64_t seed);

}  // namespace monodyn::cli
