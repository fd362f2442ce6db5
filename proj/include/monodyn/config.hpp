#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "monodyn/common.hpp"
#include "monodyn/dynamics.hpp"
#include "monodyn/training.hpp"

namespace monodyn::cli {

enum class Command { Simulate, Train, Predict, Evaluate, Verify, Report };

const char* command_name(Command c);
Command command_from_name(const std::string& s);

// How the Lyapunov anchor point is chosen.
enum class EquilibriumKind { Origin, Auto, Explicit };

struct RunPaths {
  std::filesystem::path out = "out";
  std::filesystem::path data_dir;     // optional trajectory source
  std::filesystem::path checkpoint;   // predictor checkpoint
  std::filesystem::path v_checkpoint; // optional Lyapunov checkpoint
  std::filesystem::path truth;        // optional ground-truth trajectory
  std::vector<std::filesystem::path> report_inputs;
};

struct EvalConfig {
  std::vector<int> horizons = {1500, 2500, 3500};
  std::uint64_t seed = 2000;  // held-out trajectory stream
  int scatter_steps = 250;
};

struct RunConfig {
  std::optional<Command> command;
  std::uint64_t seed = 0;
  bool has_model = false;
  dynamics::SystemModel model;
  // Sampling recipe retained so serialize() round-trips the file.
  struct ModelSource {
    std::string type;  // "lv" or "bcc"
    bool sampled = false;
    std::uint64_t rate_seed = 0;
    double a_min = 0, a_max = 5;
    double b_min = 0, b_max = 5;
    double c_min = 0, c_max = 5;
    double alpha_min = 0, alpha_max = 10;
    bool tau_relative = false;
    double tau_value = 0.0;  // absolute tau or fraction of the bound
  } model_source;
  dynamics::DatasetSpec data;
  training::TrainConfig train;
  EquilibriumKind equilibrium_kind = EquilibriumKind::Auto;
  EvalConfig eval;
  RunPaths paths;

  void validate() const;
};

// Parses the documented key-value format: [model]/[data]/[train]/[eval]/
// [paths] sections, one "key = value" per line, '#' comments. Unknown keys,
// missing required keys, and type mismatches are errors naming the line.
RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

// Inverse of parse_config: parse(serialize(cfg)) compares equal.
std::string serialize(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace monodyn::cli
