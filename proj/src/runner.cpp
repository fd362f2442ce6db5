#include "monodyn/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include "monodyn/checkpoint.hpp"
#include "monodyn/csv.hpp"
#include "monodyn/window.hpp"

namespace monodyn::cli {

namespace fs = std::filesystem;

namespace {

using analysis::BoundCheckResult;
using dynamics::Trajectory;

std::string fmt(double v) { return csv::format_double(v); }

MatrixXd fd_jacobian(const dynamics::SystemModel& model, const VectorXd& x,
                     double h) {
  const Index n = x.size();
  MatrixXd J(n, n);
  for (Index j = 0; j < n; ++j) {
    VectorXd xp = x;
    VectorXd xm = x;
    xp[j] += h;
    xm[j] = std::max(0.0, xm[j] - h);
    const double span = xp[j] - xm[j];
    J.col(j) = (dynamics::step(model, xp) - dynamics::step(model, xm)) / span;
  }
  return J;
}

std::vector<Trajectory> load_trajectories(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv" &&
        entry.path().filename().string().rfind("traj_", 0) == 0) {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) {
    throw IoError("no traj_*.csv files in " + dir.string());
  }
  std::sort(files.begin(), files.end());
  std::vector<Trajectory> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(csv::read_trajectory(f));
  return out;
}

std::vector<Trajectory> training_data(const RunConfig& cfg) {
  if (!cfg.paths.data_dir.empty()) {
    return load_trajectories(cfg.paths.data_dir);
  }
  return dynamics::generate_dataset(cfg.model, cfg.data);
}

window::Window initial_window(const Trajectory& truth, int q) {
  window::Window w;
  w.states.resize(q, truth.dim());
  for (Index i = 0; i < q; ++i) {
    w.states.row(i) = truth.states.row(q - 1 - i);
  }
  return w;
}

void cmd_simulate(const RunConfig& cfg) {
  const auto trajs = dynamics::generate_dataset(cfg.model, cfg.data);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "traj_%03zu.csv", i);
    csv::write_trajectory(cfg.paths.out / name, trajs[i]);
  }
}

void cmd_train(const RunConfig& cfg, const RunOptions& opts) {
  const fs::path f_path = cfg.paths.out / "f.ckpt";
  if (fs::exists(f_path) && !opts.overwrite) {
    throw IoError("checkpoint exists, pass --overwrite to replace: " +
                  f_path.string());
  }
  const auto data = training_data(cfg);
  training::TrainConfig tc = cfg.train;
  tc.equilibrium = resolve_equilibrium(cfg);

  const auto hook = [&](long step, const nn::MonotoneNet& f,
                        const nn::LyapunovNet* v) {
    char name[48];
    std::snprintf(name, sizeof(name), "f_%06ld.ckpt", step);
    nn::save_net(cfg.paths.out / name, f, step);
    if (v) {
      std::snprintf(name, sizeof(name), "v_%06ld.ckpt", step);
      nn::save_lyapunov_net(cfg.paths.out / name, *v, step);
    }
  };
  const auto result = training::alternating_train(data, tc, hook);

  nn::save_net(f_path, result.predictor, result.steps_done);
  if (result.lyapunov) {
    nn::save_lyapunov_net(cfg.paths.out / "v.ckpt", *result.lyapunov,
                          result.steps_done);
  }
  std::vector<std::vector<std::string>> rows;
  rows.reserve(result.history.size());
  for (const auto& h : result.history) {
    rows.push_back({std::to_string(h.step), fmt(h.loss.mse),
                    fmt(h.loss.lyapunov_zero), fmt(h.loss.lyapunov_positivity),
                    fmt(h.loss.lyapunov_descent), fmt(h.lr_f), fmt(h.lr_v)});
  }
  csv::write_table(
      cfg.paths.out / "loss.csv",
      {"step", "mse", "lyap_zero", "lyap_pos", "lyap_descent", "lr_f", "lr_v"},
      rows);
}

void cmd_predict(const RunConfig& cfg) {
  if (cfg.paths.checkpoint.empty()) {
    throw ConfigError("predict needs paths.checkpoint");
  }
  const nn::MonotoneNet f = nn::load_net(cfg.paths.checkpoint);
  const int q = cfg.train.q;
  const int t_max = cfg.eval.horizons.back();
  const Trajectory truth = held_out_trajectory(cfg, q + t_max + 1);
  const MatrixXd preds = window::rollout_meta(initial_window(truth, q), f,
                                              t_max);
  Trajectory pred_traj{preds};
  csv::write_trajectory(cfg.paths.out / "prediction.csv", pred_traj, q);
}

void write_eval_artifacts(const RunConfig& cfg,
                          const EvaluationArtifacts& art, bool has_v) {
  const auto& rep = art.report;
  std::vector<std::vector<std::string>> totals;
  for (std::size_t i = 0; i < rep.horizons.size(); ++i) {
    totals.push_back({std::to_string(rep.horizons[i]),
                      fmt(rep.total_errors[static_cast<Index>(i)])});
  }
  csv::write_table(cfg.paths.out / "eval_total.csv",
                   {"horizon", "total_error"}, totals);

  std::vector<std::string> header = {"dimension"};
  for (int h : rep.horizons) header.push_back("T" + std::to_string(h));
  std::vector<std::vector<std::string>> per_dim;
  for (Index d = 0; d < rep.per_dim_errors.rows(); ++d) {
    std::vector<std::string> row = {"x" + std::to_string(d)};
    for (Index h = 0; h < rep.per_dim_errors.cols(); ++h) {
      row.push_back(fmt(rep.per_dim_errors(d, h)));
    }
    per_dim.push_back(std::move(row));
  }
  csv::write_table(cfg.paths.out / "eval_per_dim.csv", header, per_dim);

  std::vector<std::vector<std::string>> metrics = {
      {"monotonicity_violation_rate", fmt(rep.monotonicity_violation_rate)},
      {"convexity_violation_rate", fmt(rep.convexity_violation_rate)}};
  if (has_v) {
    metrics.push_back({"descent_fraction", fmt(rep.descent_fraction)});
  }
  metrics.push_back({"output_weight_min", fmt(art.output_weight_min)});
  metrics.push_back({"output_weight_max", fmt(art.output_weight_max)});
  csv::write_table(cfg.paths.out / "eval_report.csv", {"metric", "value"},
                   metrics);

  // Output-layer weight distribution, the mixing-uniformity evidence.
  std::vector<std::vector<std::string>> hist_rows;
  for (std::size_t i = 0; i < art.output_weight_hist.counts.size(); ++i) {
    hist_rows.push_back(
        {fmt(art.output_weight_hist.centers[static_cast<Index>(i)]),
         std::to_string(art.output_weight_hist.counts[i])});
  }
  csv::write_table(cfg.paths.out / "weight_hist.csv", {"bin_center", "count"},
                   hist_rows);

  // Plot-ready series: truth and prediction per dimension.
  const int q = cfg.train.q;
  const Index n = art.truth_slice.cols();
  std::vector<std::string> series_header = {"t"};
  for (Index d = 0; d < n; ++d) series_header.push_back("truth_x" + std::to_string(d));
  for (Index d = 0; d < n; ++d) series_header.push_back("pred_x" + std::to_string(d));
  std::vector<std::vector<std::string>> series;
  for (Index r = 0; r < art.predictions.rows(); ++r) {
    std::vector<std::string> row = {std::to_string(q + r)};
    for (Index d = 0; d < n; ++d) row.push_back(fmt(art.truth_slice(r, d)));
    for (Index d = 0; d < n; ++d) row.push_back(fmt(art.predictions(r, d)));
    series.push_back(std::move(row));
  }
  csv::write_table(cfg.paths.out / "series.csv", series_header, series);

  // x(t+1)-vs-x(t) scatter over the leading prediction steps, for both the
  // truth and the predicted trajectory.
  const Index scatter = std::min<Index>(cfg.eval.scatter_steps,
                                        art.predictions.rows() - 1);
  std::vector<std::vector<std::string>> lag;
  for (Index d = 0; d < n; ++d) {
    for (Index r = 0; r < scatter; ++r) {
      lag.push_back({std::to_string(d), std::to_string(q + r),
                     fmt(art.truth_slice(r, d)), fmt(art.truth_slice(r + 1, d)),
                     fmt(art.predictions(r, d)), fmt(art.predictions(r + 1, d))});
    }
  }
  csv::write_table(
      cfg.paths.out / "lag_scatter.csv",
      {"dim", "t", "truth_x", "truth_x_next", "pred_x", "pred_x_next"}, lag);
}

void cmd_evaluate(const RunConfig& cfg) {
  if (cfg.paths.checkpoint.empty()) {
    throw ConfigError("evaluate needs paths.checkpoint");
  }
  const nn::MonotoneNet f = nn::load_net(cfg.paths.checkpoint);
  std::optional<nn::LyapunovNet> v;
  if (!cfg.paths.v_checkpoint.empty()) {
    v = nn::load_lyapunov_net(cfg.paths.v_checkpoint);
  }
  const auto art = evaluate_predictor(cfg, f, v ? &*v : nullptr);
  write_eval_artifacts(cfg, art, v.has_value());
}

void cmd_verify(const RunConfig& cfg) {
  const auto checks = verification_presets(cfg.seed);
  std::vector<std::vector<std::string>> rows;
  bool all_pass = true;
  for (const auto& c : checks) {
    rows.push_back({c.name, fmt(c.empirical), fmt(c.bound),
                    c.pass ? "pass" : "fail"});
    std::printf("[%s] %s empirical=%g bound=%g\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.empirical, c.bound);
    all_pass = all_pass && c.pass;
  }
  csv::write_table(cfg.paths.out / "verify_report.csv",
                   {"name", "empirical", "bound", "result"}, rows);
  if (!all_pass) throw NumericError("verification checks failed");
}

void cmd_report(const RunConfig& cfg) {
  struct Cell {
    std::string text;
    double value;
  };
  std::vector<std::string> labels;
  std::vector<std::vector<std::pair<int, Cell>>> tables;
  for (const auto& dir : cfg.paths.report_inputs) {
    std::vector<std::string> header;
    const auto rows = csv::read_table(dir / "eval_total.csv", &header);
    std::vector<std::pair<int, Cell>> entries;
    for (const auto& row : rows) {
      entries.emplace_back(
          std::stoi(row.at(0)),
          Cell{row.at(1), std::strtod(row.at(1).c_str(), nullptr)});
    }
    tables.push_back(std::move(entries));
    labels.push_back(dir.filename().string());
  }
  for (std::size_t i = 1; i < tables.size(); ++i) {
    if (tables[i].size() != tables[0].size()) {
      throw IoError("report inputs cover different horizons");
    }
  }
  std::vector<std::string> header = {"horizon"};
  header.insert(header.end(), labels.begin(), labels.end());
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < tables[0].size(); ++r) {
    double row_min = std::numeric_limits<double>::infinity();
    for (const auto& t : tables) row_min = std::min(row_min, t[r].second.value);
    std::vector<std::string> row = {std::to_string(tables[0][r].first)};
    for (const auto& t : tables) {
      // The true row minimum is starred rather than reproducing any
      // hand-picked emphasis.
      std::string cell = t[r].second.text;
      if (t[r].second.value == row_min) cell += "*";
      row.push_back(std::move(cell));
    }
    rows.push_back(std::move(row));
  }
  csv::write_table(cfg.paths.out / "table1.csv", header, rows);

  for (std::size_t i = 0; i < cfg.paths.report_inputs.size(); ++i) {
    const fs::path src = cfg.paths.report_inputs[i] / "series.csv";
    if (fs::exists(src)) {
      fs::copy_file(src, cfg.paths.out / ("series_" + labels[i] + ".csv"),
                    fs::copy_options::overwrite_existing);
    }
  }
}

}  // namespace

dynamics::Trajectory held_out_trajectory(const RunConfig& cfg, int min_rows) {
  if (!cfg.paths.truth.empty()) {
    auto traj = csv::read_trajectory(cfg.paths.truth);
    if (traj.states.rows() < min_rows) {
      throw IoError("truth trajectory too short: needs " +
                    std::to_string(min_rows) + " rows");
    }
    return traj;
  }
  // Fresh stream disjoint from the dataset's (seed, index) streams.
  Rng rng = make_rng(cfg.eval.seed, 0x65766131);
  const int dim = dynamics::state_dim(cfg.model);
  VectorXd x0(dim);
  for (int i = 0; i < dim; ++i) {
    x0[i] = uniform(rng, cfg.data.init_low, cfg.data.init_high);
  }
  return dynamics::simulate(cfg.model, x0, min_rows - 1);
}

VectorXd resolve_equilibrium(const RunConfig& cfg) {
  switch (cfg.equilibrium_kind) {
    case EquilibriumKind::Origin:
      return VectorXd::Zero(dynamics::state_dim(cfg.model));
    case EquilibriumKind::Auto:
      return dynamics::fixed_point(cfg.model);
    case EquilibriumKind::Explicit:
      if (cfg.train.equilibrium.size() != dynamics::state_dim(cfg.model)) {
        throw ConfigError("train.equilibrium dimension does not match model");
      }
      return cfg.train.equilibrium;
  }
  return VectorXd();
}

EvaluationArtifacts evaluate_predictor(const RunConfig& cfg,
                                       const nn::MonotoneNet& predictor,
                                       const nn::LyapunovNet* vnet) {
  const int q = cfg.train.q;
  const int t_max = cfg.eval.horizons.back();
  const Trajectory truth = held_out_trajectory(cfg, q + t_max + 1);

  EvaluationArtifacts art;
  art.predictions = window::rollout_meta(initial_window(truth, q), predictor,
                                         t_max);
  art.truth_slice = truth.states.middleRows(q, t_max);

  auto& rep = art.report;
  rep.horizons = cfg.eval.horizons;
  rep.total_errors.resize(static_cast<Index>(rep.horizons.size()));
  rep.per_dim_errors.resize(truth.dim(),
                            static_cast<Index>(rep.horizons.size()));
  for (std::size_t i = 0; i < rep.horizons.size(); ++i) {
    const int T = rep.horizons[i];
    const auto pred = art.predictions.topRows(T);
    const auto tru = art.truth_slice.topRows(T);
    rep.total_errors[static_cast<Index>(i)] =
        analysis::normalized_l2_error(pred, tru);
    rep.per_dim_errors.col(static_cast<Index>(i)) =
        analysis::per_dimension_errors(pred, tru);
  }

  // Property scans over the positive-orthant box the data actually covers.
  const double data_max = truth.states.maxCoeff();
  const Index in_dim = predictor.input_dim();
  const VectorXd lo = VectorXd::Zero(in_dim);
  const VectorXd hi = VectorXd::Constant(in_dim, data_max);
  rep.monotonicity_violation_rate =
      analysis::monotonicity_scan(predictor, lo, hi, 2000, cfg.seed + 1);
  rep.convexity_violation_rate =
      analysis::convexity_midpoint_test(predictor, lo, hi, 2000, cfg.seed + 2)
          .violation_rate;
  if (vnet) {
    const std::vector<Trajectory> test = {truth};
    rep.descent_fraction =
        analysis::lyapunov_descent_check(*vnet, predictor, test, q);
  }
  art.output_weight_hist = analysis::weight_histogram(predictor, -1, 40);
  const MatrixXd& out_w = predictor.layers().back().weight;
  art.output_weight_min = out_w.minCoeff();
  art.output_weight_max = out_w.maxCoeff();
  return art;
}

std::vector<analysis::BoundCheckResult> verification_presets(
    std::uint64_t seed) {
  std::vector<BoundCheckResult> out;

  // Simulator monotonicity: Jacobian entries stay nonnegative below the tau
  // bound, go negative above it, and match finite differences.
  const auto jacobian_checks = [&](const dynamics::SystemModel& base,
                                   const std::string& tag) {
    const double bound = dynamics::tau_bound(base);
    const auto below = dynamics::with_tau(base, 0.5 * bound);
    const auto above = dynamics::with_tau(base, 2.0 * bound);
    const int dim = dynamics::state_dim(base);
    Rng rng = make_rng(seed, 0x6a616342);
    double min_below = std::numeric_limits<double>::infinity();
    double min_above = std::numeric_limits<double>::infinity();
    double max_rel = 0.0;
    for (int k = 0; k < 100; ++k) {
      VectorXd x(dim);
      for (int i = 0; i < dim; ++i) x[i] = uniform(rng, 0.0, 1.0);
      const MatrixXd Jb = dynamics::jacobian(below, x);
      const MatrixXd Ja = dynamics::jacobian(above, x);
      min_below = std::min(min_below, Jb.minCoeff());
      min_above = std::min(min_above, Ja.minCoeff());
      const MatrixXd Jfd = fd_jacobian(below, x, 1e-6);
      const double scale = std::max(1.0, Jb.cwiseAbs().maxCoeff());
      max_rel =
          std::max(max_rel, (Jb - Jfd).cwiseAbs().maxCoeff() / scale);
    }
    out.push_back({tag + "_jacobian_nonneg_below_bound", min_below, -1e-9,
                   min_below >= -1e-9});
    out.push_back({tag + "_jacobian_negative_above_bound", min_above, 0.0,
                   min_above < 0.0});
    out.push_back(
        {tag + "_jacobian_fd_agreement", max_rel, 1e-5, max_rel <= 1e-5});
  };
  jacobian_checks(dynamics::with_tau(dynamics::sample_lv_params(
                                         2, 7, 0, 5, 0, 5, 0, 5),
                                     1.0),
                  "lv");
  jacobian_checks(
      dynamics::with_tau(dynamics::sample_bcc_params(5, 7, 0.5, 10, 8, 10),
                         1.0),
      "bcc");

  // Hard projection makes the net monotone.
  {
    Rng rng = make_rng(seed, 0x6e657431);
    nn::NetSpec spec;
    spec.input_dim = 4;
    spec.hidden = {32, 32};
    spec.output_dim = 4;
    spec.mode = nn::ConstraintMode::HardZero;
    nn::MonotoneNet net = nn::make_net(spec, rng);
    // Start from sign-mixed weights so the projection does real work.
    for (auto& layer : net.layers()) {
      for (Index i = 0; i < layer.weight.size(); ++i) {
        layer.weight.data()[i] -= 0.005;
      }
    }
    net.project_nonnegative(rng);
    const VectorXd lo = VectorXd::Zero(4);
    const VectorXd hi = VectorXd::Ones(4);
    const double rate =
        analysis::monotonicity_scan(net, lo, hi, 10000, seed + 3);
    out.push_back({"hard_projection_monotone", rate, 0.0, rate == 0.0});
  }

  // Max-ReLU-only nonnegative nets are convex; a min-ReLU net is not.
  {
    Rng rng = make_rng(seed, 0x6e657432);
    nn::NetSpec spec;
    spec.input_dim = 3;
    spec.hidden = {16, 16};
    spec.output_dim = 3;
    spec.min_relu_fraction = 0.0;
    spec.mode = nn::ConstraintMode::HardZero;
    nn::MonotoneNet net = nn::make_net(spec, rng);
    const VectorXd lo = VectorXd::Constant(3, -1.0);
    const VectorXd hi = VectorXd::Ones(3);
    const auto res =
        analysis::convexity_midpoint_test(net, lo, hi, 10000, seed + 4);
    out.push_back({"max_relu_convexity", res.violation_rate, 0.0,
                   res.violation_rate == 0.0 && res.assumptions_hold});

    std::vector<nn::DenseLayer> layers(2);
    layers[0].weight = MatrixXd::Ones(1, 1);
    layers[0].bias = VectorXd::Zero(1);
    layers[0].act = {nn::Activation::MinRelu};
    layers[1].weight = MatrixXd::Ones(1, 1);
    layers[1].bias = VectorXd::Zero(1);
    layers[1].act = {nn::Activation::Linear};
    nn::MonotoneNet concave(std::move(layers), nn::ConstraintMode::HardZero);
    const auto res2 = analysis::convexity_midpoint_test(
        concave, VectorXd::Constant(1, -2.0), VectorXd::Constant(1, 2.0),
        10000, seed + 5);
    out.push_back({"min_relu_convexity_counterexample", res2.violation_rate, 0.0,
                   res2.violation_rate > 0.0});
  }

  // Variance bounds.
  {
    analysis::BoundCheckSpec l2;
    l2.a = 1.0;
    l2.epsilon = 0.3;
    l2.T = 5;
    l2.trials = 100000;
    l2.seed = seed;
    auto res = analysis::composed_variance_check(l2);
    out.push_back(res);
    // The additive-noise case is exact, so check both sides of the bound.
    out.push_back({"composed_variance_exact_two_sided", res.empirical, res.bound,
                   std::abs(res.empirical - res.bound) <= 0.05 * res.bound});

    analysis::BoundCheckSpec t1;
    t1.a = 0.5;
    t1.b = 1.0;
    t1.epsilon = 0.3;
    t1.q = 10;
    t1.T = 50;
    t1.trials = 100000;
    t1.seed = seed;
    out.push_back(analysis::windowed_variance_check(t1));
  }

  // Window-condition examples.
  {
    const bool c1 = analysis::window_condition(100, 1.0, 0.1, 1.0, 1);
    const bool c2 = analysis::window_condition(1, 1.0, 0.0, 1.0, 1);
    out.push_back({"window_condition_q100_holds", c1 ? 1.0 : 0.0, 1.0, c1});
    out.push_back(
        {"window_condition_q1_fails", c2 ? 1.0 : 0.0, 0.0, !c2});
  }
  return out;
}

void run(const RunConfig& cfg, const RunOptions& opts) {
  if (!cfg.command) throw ConfigError("no command given");
  cfg.validate();
  fs::create_directories(cfg.paths.out);
  const fs::path marker = cfg.paths.out / ".incomplete";
  {
    std::ofstream m(marker);
    m << "command " << command_name(*cfg.command) << " in flight\n";
  }
  switch (*cfg.command) {
    case Command::Simulate: cmd_simulate(cfg); break;
    case Command::Train: cmd_train(cfg, opts); break;
    case Command::Predict: cmd_predict(cfg); break;
    case Command::Evaluate: cmd_evaluate(cfg); break;
    case Command::Verify: cmd_verify(cfg); break;
    case Command::Report: cmd_report(cfg); break;
  }
  fs::remove(marker);
}

}  // namespace monodyn::cli
