#include "monodyn/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "monodyn/csv.hpp"

namespace monodyn::cli {

namespace {

struct KeyValue {
  std::string value;
  int line = 0;
  bool used = false;
};

using Section = std::map<std::string, KeyValue>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

class Reader {
 public:
  explicit Reader(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    std::string section;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string line = raw;
      if (const auto hash = line.find('#'); hash != std::string::npos) {
        line.erase(hash);
      }
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(line_no, "malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section != "model" && section != "data" && section != "train" &&
            section != "eval" && section != "paths") {
          fail(line_no, "unknown section [" + section + "]");
        }
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) fail(line_no, "empty key");
      auto& sec = sections_[section];
      if (sec.count(key)) fail(line_no, "duplicate key '" + key + "'");
      sec[key] = KeyValue{value, line_no, false};
    }
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto sit = sections_.find(section);
    return sit != sections_.end() && sit->second.count(key);
  }

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) {
    auto sit = sections_.find(section);
    if (sit == sections_.end()) return std::nullopt;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return std::nullopt;
    kit->second.used = true;
    last_line_ = kit->second.line;
    return kit->second.value;
  }

  int last_line() const { return last_line_; }

  std::string require(const std::string& section, const std::string& key) {
    auto v = get(section, key);
    if (!v) {
      throw ConfigError("config: missing required key '" +
                        qualified(section, key) + "'");
    }
    return *v;
  }

  void check_all_used() const {
    for (const auto& [section, keys] : sections_) {
      for (const auto& [key, kv] : keys) {
        if (!kv.used) {
          fail(kv.line, "unknown key '" + qualified(section, key) + "'");
        }
      }
    }
  }

  static std::string qualified(const std::string& section,
                               const std::string& key) {
    return section.empty() ? key : section + "." + key;
  }

 private:
  std::map<std::string, Section> sections_;
  int last_line_ = 0;
};

double to_double(Reader& r, const std::string& section, const std::string& key,
                 const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(r.last_line(), "'" + Reader::qualified(section, key) +
                            "' expects a number, got '" + v + "'");
  }
}

long to_long(Reader& r, const std::string& section, const std::string& key,
             const std::string& v) {
  try {
    std::size_t pos = 0;
    const long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    fail(r.last_line(), "'" + Reader::qualified(section, key) +
                            "' expects an integer, got '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::vector<double> to_doubles(Reader& r, const std::string& section,
                               const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) {
    out.push_back(to_double(r, section, key, item));
  }
  return out;
}

std::vector<int> to_ints(Reader& r, const std::string& section,
                         const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) {
    out.push_back(static_cast<int>(to_long(r, section, key, item)));
  }
  return out;
}

template <typename T, typename Convert>
void maybe(Reader& r, const std::string& section, const std::string& key,
           T& dest, Convert convert) {
  if (auto v = r.get(section, key)) dest = convert(r, section, key, *v);
}

void parse_model(Reader& r, RunConfig& cfg) {
  auto type = r.get("model", "type");
  if (!type) {
    if (r.has("model", "tau") || r.has("model", "n_patches") ||
        r.has("model", "n_enzymes")) {
      throw ConfigError("config: missing required key 'model.type'");
    }
    return;  // no model section
  }
  cfg.has_model = true;
  auto& src = cfg.model_source;
  src.type = *type;

  if (auto v = r.get("model", "tau")) {
    src.tau_relative = false;
    src.tau_value = to_double(r, "model", "tau", *v);
  }
  if (auto v = r.get("model", "tau_scale")) {
    if (src.tau_value != 0.0) {
      fail(r.last_line(), "give either model.tau or model.tau_scale");
    }
    src.tau_relative = true;
    src.tau_value = to_double(r, "model", "tau_scale", *v);
  }
  if (src.tau_value <= 0.0) {
    throw ConfigError("config: model needs a positive tau or tau_scale");
  }

  if (src.type == "lv") {
    const int n =
        static_cast<int>(to_long(r, "model", "n_patches",
                                 r.require("model", "n_patches")));
    dynamics::LVParams lv;
    if (r.has("model", "a") || r.has("model", "b") || r.has("model", "c")) {
      lv.n_patches = n;
      lv.a = to_doubles(r, "model", "a", r.require("model", "a"));
      lv.b = to_doubles(r, "model", "b", r.require("model", "b"));
      lv.c = to_doubles(r, "model", "c", r.require("model", "c"));
      src.sampled = false;
    } else {
      src.sampled = true;
      src.rate_seed = static_cast<std::uint64_t>(
          to_long(r, "model", "rate_seed", r.require("model", "rate_seed")));
      maybe(r, "model", "a_min", src.a_min, to_double);
      maybe(r, "model", "a_max", src.a_max, to_double);
      maybe(r, "model", "b_min", src.b_min, to_double);
      maybe(r, "model", "b_max", src.b_max, to_double);
      maybe(r, "model", "c_min", src.c_min, to_double);
      maybe(r, "model", "c_max", src.c_max, to_double);
      lv = dynamics::sample_lv_params(n, src.rate_seed, src.a_min, src.a_max,
                                      src.b_min, src.b_max, src.c_min,
                                      src.c_max);
    }
    lv.tau = 1.0;  // placeholder until the bound is known
    cfg.model = lv;
  } else if (src.type == "bcc") {
    const int n =
        static_cast<int>(to_long(r, "model", "n_enzymes",
                                 r.require("model", "n_enzymes")));
    dynamics::BCCParams bcc;
    bcc.n_enzymes = n;
    bcc.K = to_double(r, "model", "K", r.require("model", "K"));
    bcc.p_exp =
        static_cast<int>(to_long(r, "model", "p", r.require("model", "p")));
    if (r.has("model", "alpha")) {
      bcc.alpha = to_doubles(r, "model", "alpha", r.require("model", "alpha"));
      src.sampled = false;
    } else {
      src.sampled = true;
      src.rate_seed = static_cast<std::uint64_t>(
          to_long(r, "model", "rate_seed", r.require("model", "rate_seed")));
      maybe(r, "model", "alpha_min", src.alpha_min, to_double);
      maybe(r, "model", "alpha_max", src.alpha_max, to_double);
      const auto sampled = dynamics::sample_bcc_params(
          n, src.rate_seed, src.alpha_min, src.alpha_max, bcc.K, bcc.p_exp);
      bcc.alpha = sampled.alpha;
    }
    bcc.tau = 1.0;
    cfg.model = bcc;
  } else {
    throw ConfigError("config: model.type must be 'lv' or 'bcc', got '" +
                      src.type + "'");
  }

  const double tau = src.tau_relative
                         ? src.tau_value * dynamics::tau_bound(cfg.model)
                         : src.tau_value;
  cfg.model = dynamics::with_tau(cfg.model, tau);
  std::visit([](const auto& p) { p.validate(); }, cfg.model);
}

void parse_train(Reader& r, RunConfig& cfg) {
  auto& t = cfg.train;
  maybe(r, "train", "q", t.q,
        [](Reader& rr, const auto& s, const auto& k, const std::string& v) {
          return static_cast<int>(to_long(rr, s, k, v));
        });
  if (auto v = r.get("train", "hidden")) {
    t.hidden = to_ints(r, "train", "hidden", *v);
  }
  if (auto v = r.get("train", "v_hidden")) {
    t.v_hidden = to_ints(r, "train", "v_hidden", *v);
  }
  maybe(r, "train", "epochs", t.epochs, to_long);
  maybe(r, "train", "batch", t.batch,
        [](Reader& rr, const auto& s, const auto& k, const std::string& v) {
          return static_cast<int>(to_long(rr, s, k, v));
        });
  maybe(r, "train", "lr_f", t.lr_f, to_double);
  maybe(r, "train", "lr_v", t.lr_v, to_double);
  maybe(r, "train", "decay_rate", t.decay_rate, to_double);
  maybe(r, "train", "decay_interval", t.decay_interval, to_long);
  maybe(r, "train", "weight_decay", t.weight_decay, to_double);
  maybe(r, "train", "min_relu_fraction", t.min_relu_fraction, to_double);
  maybe(r, "train", "checkpoint_interval", t.checkpoint_interval, to_long);
  if (auto v = r.get("train", "method")) {
    if (*v == "mono_lyap") t.method = training::Method::MonoLyap;
    else if (*v == "mono_only") t.method = training::Method::MonoOnly;
    else if (*v == "baseline") t.method = training::Method::Baseline;
    else fail(r.last_line(), "train.method must be mono_lyap, mono_only or baseline");
    if (t.method == training::Method::Baseline) {
      t.constraint = nn::ConstraintMode::None;
    }
  }
  if (auto v = r.get("train", "constraint")) {
    if (*v == "hard_zero") t.constraint = nn::ConstraintMode::HardZero;
    else if (*v == "hard_small_random")
      t.constraint = nn::ConstraintMode::HardSmallRandom;
    else if (*v == "bn_soft") t.constraint = nn::ConstraintMode::BnSoft;
    else if (*v == "none") t.constraint = nn::ConstraintMode::None;
    else fail(r.last_line(), "unknown train.constraint '" + *v + "'");
  }
  if (auto v = r.get("train", "v_constraint")) {
    if (*v == "hard_zero") t.v_constraint = nn::ConstraintMode::HardZero;
    else if (*v == "hard_small_random")
      t.v_constraint = nn::ConstraintMode::HardSmallRandom;
    else if (*v == "none") t.v_constraint = nn::ConstraintMode::None;
    else fail(r.last_line(), "unknown train.v_constraint '" + *v + "'");
  }
  if (auto v = r.get("train", "update_order")) {
    if (*v == "v_first") t.order = training::UpdateOrder::VFirst;
    else if (*v == "f_first") t.order = training::UpdateOrder::FFirst;
    else fail(r.last_line(), "train.update_order must be v_first or f_first");
  }
  if (auto v = r.get("train", "seed")) {
    t.seed = static_cast<std::uint64_t>(to_long(r, "train", "seed", *v));
  }
  if (auto v = r.get("train", "equilibrium")) {
    if (*v == "origin") {
      cfg.equilibrium_kind = EquilibriumKind::Origin;
    } else if (*v == "auto") {
      cfg.equilibrium_kind = EquilibriumKind::Auto;
    } else {
      cfg.equilibrium_kind = EquilibriumKind::Explicit;
      const auto values = to_doubles(r, "train", "equilibrium", *v);
      t.equilibrium =
          Eigen::Map<const VectorXd>(values.data(),
                                     static_cast<Index>(values.size()));
    }
  }
}

}  // namespace

const char* command_name(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Train: return "train";
    case Command::Predict: return "predict";
    case Command::Evaluate: return "evaluate";
    case Command::Verify: return "verify";
    case Command::Report: return "report";
  }
  return "?";
}

Command command_from_name(const std::string& s) {
  if (s == "simulate") return Command::Simulate;
  if (s == "train") return Command::Train;
  if (s == "predict") return Command::Predict;
  if (s == "evaluate") return Command::Evaluate;
  if (s == "verify") return Command::Verify;
  if (s == "report") return Command::Report;
  throw ConfigError("unknown command '" + s + "'");
}

void RunConfig::validate() const {
  for (std::size_t i = 1; i < eval.horizons.size(); ++i) {
    if (eval.horizons[i] <= eval.horizons[i - 1]) {
      throw ConfigError("config: eval.horizons must be strictly increasing");
    }
  }
  if (eval.horizons.empty()) {
    throw ConfigError("config: eval.horizons must not be empty");
  }
  train.validate();
  if (command) {
    const bool needs_model =
        *command == Command::Simulate || *command == Command::Train ||
        *command == Command::Predict || *command == Command::Evaluate;
    if (needs_model && !has_model) {
      throw ConfigError("config: missing required key 'model.type'");
    }
    if (*command == Command::Report && paths.report_inputs.empty()) {
      throw ConfigError(
          "config: report needs 'paths.report_inputs' (evaluate output dirs)");
    }
  }
}

RunConfig parse_config(const std::string& text) {
  Reader r(text);
  RunConfig cfg;

  if (auto v = r.get("", "command")) cfg.command = command_from_name(*v);
  if (auto v = r.get("", "seed")) {
    cfg.seed = static_cast<std::uint64_t>(to_long(r, "", "seed", *v));
  }

  parse_model(r, cfg);

  maybe(r, "data", "n_trajectories", cfg.data.n_trajectories,
        [](Reader& rr, const auto& s, const auto& k, const std::string& v) {
          return static_cast<int>(to_long(rr, s, k, v));
        });
  maybe(r, "data", "horizon", cfg.data.horizon,
        [](Reader& rr, const auto& s, const auto& k, const std::string& v) {
          return static_cast<int>(to_long(rr, s, k, v));
        });
  maybe(r, "data", "init_low", cfg.data.init_low, to_double);
  maybe(r, "data", "init_high", cfg.data.init_high, to_double);
  if (auto v = r.get("data", "seed")) {
    cfg.data.seed = static_cast<std::uint64_t>(to_long(r, "data", "seed", *v));
  }

  parse_train(r, cfg);

  if (auto v = r.get("eval", "horizons")) {
    cfg.eval.horizons = to_ints(r, "eval", "horizons", *v);
  }
  if (auto v = r.get("eval", "seed")) {
    cfg.eval.seed = static_cast<std::uint64_t>(to_long(r, "eval", "seed", *v));
  }
  maybe(r, "eval", "scatter_steps", cfg.eval.scatter_steps,
        [](Reader& rr, const auto& s, const auto& k, const std::string& v) {
          return static_cast<int>(to_long(rr, s, k, v));
        });

  if (auto v = r.get("paths", "out")) cfg.paths.out = *v;
  if (auto v = r.get("paths", "data_dir")) cfg.paths.data_dir = *v;
  if (auto v = r.get("paths", "checkpoint")) cfg.paths.checkpoint = *v;
  if (auto v = r.get("paths", "v_checkpoint")) cfg.paths.v_checkpoint = *v;
  if (auto v = r.get("paths", "truth")) cfg.paths.truth = *v;
  if (auto v = r.get("paths", "report_inputs")) {
    for (const auto& item : split_list(*v)) {
      cfg.paths.report_inputs.emplace_back(item);
    }
  }

  r.check_all_used();
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const RunConfig& cfg) {
  std::ostringstream out;
  const auto num = [](double v) { return csv::format_double(v); };
  if (cfg.command) out << "command = " << command_name(*cfg.command) << "\n";
  out << "seed = " << cfg.seed << "\n";

  if (cfg.has_model) {
    const auto& src = cfg.model_source;
    out << "\n[model]\n";
    out << "type = " << src.type << "\n";
    if (src.type == "lv") {
      const auto& lv = std::get<dynamics::LVParams>(cfg.model);
      out << "n_patches = " << lv.n_patches << "\n";
      if (src.sampled) {
        out << "rate_seed = " << src.rate_seed << "\n";
        out << "a_min = " << num(src.a_min) << "\na_max = " << num(src.a_max)
            << "\n";
        out << "b_min = " << num(src.b_min) << "\nb_max = " << num(src.b_max)
            << "\n";
        out << "c_min = " << num(src.c_min) << "\nc_max = " << num(src.c_max)
            << "\n";
      } else {
        const auto list = [&](const std::vector<double>& vs) {
          std::string s;
          for (std::size_t i = 0; i < vs.size(); ++i) {
            s += (i ? "," : "") + num(vs[i]);
          }
          return s;
        };
        out << "a = " << list(lv.a) << "\n";
        out << "b = " << list(lv.b) << "\n";
        out << "c = " << list(lv.c) << "\n";
      }
    } else {
      const auto& bcc = std::get<dynamics::BCCParams>(cfg.model);
      out << "n_enzymes = " << bcc.n_enzymes << "\n";
      out << "K = " << num(bcc.K) << "\n";
      out << "p = " << bcc.p_exp << "\n";
      if (src.sampled) {
        out << "rate_seed = " << src.rate_seed << "\n";
        out << "alpha_min = " << num(src.alpha_min)
            << "\nalpha_max = " << num(src.alpha_max) << "\n";
      } else {
        std::string s;
        for (std::size_t i = 0; i < bcc.alpha.size(); ++i) {
          s += (i ? "," : "") + num(bcc.alpha[i]);
        }
        out << "alpha = " << s << "\n";
      }
    }
    if (src.tau_relative) {
      out << "tau_scale = " << num(src.tau_value) << "\n";
    } else {
      out << "tau = " << num(src.tau_value) << "\n";
    }
  }

  out << "\n[data]\n";
  out << "n_trajectories = " << cfg.data.n_trajectories << "\n";
  out << "horizon = " << cfg.data.horizon << "\n";
  out << "init_low = " << num(cfg.data.init_low) << "\n";
  out << "init_high = " << num(cfg.data.init_high) << "\n";
  out << "seed = " << cfg.data.seed << "\n";

  const auto& t = cfg.train;
  out << "\n[train]\n";
  out << "q = " << t.q << "\n";
  const auto int_list = [&](const std::vector<int>& vs) {
    std::string s;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      s += (i ? "," : "") + std::to_string(vs[i]);
    }
    return s;
  };
  out << "hidden = " << int_list(t.hidden) << "\n";
  if (!t.v_hidden.empty()) out << "v_hidden = " << int_list(t.v_hidden) << "\n";
  out << "epochs = " << t.epochs << "\n";
  out << "batch = " << t.batch << "\n";
  out << "lr_f = " << num(t.lr_f) << "\n";
  out << "lr_v = " << num(t.lr_v) << "\n";
  out << "decay_rate = " << num(t.decay_rate) << "\n";
  out << "decay_interval = " << t.decay_interval << "\n";
  out << "weight_decay = " << num(t.weight_decay) << "\n";
  out << "method = "
      << (t.method == training::Method::MonoLyap
              ? "mono_lyap"
              : t.method == training::Method::MonoOnly ? "mono_only"
                                                       : "baseline")
      << "\n";
  switch (t.constraint) {
    case nn::ConstraintMode::HardZero: out << "constraint = hard_zero\n"; break;
    case nn::ConstraintMode::HardSmallRandom:
      out << "constraint = hard_small_random\n";
      break;
    case nn::ConstraintMode::BnSoft: out << "constraint = bn_soft\n"; break;
    case nn::ConstraintMode::None: out << "constraint = none\n"; break;
  }
  switch (t.v_constraint) {
    case nn::ConstraintMode::HardZero: out << "v_constraint = hard_zero\n"; break;
    case nn::ConstraintMode::HardSmallRandom:
      out << "v_constraint = hard_small_random\n";
      break;
    default: break;  // the default never needs spelling out
  }
  out << "min_relu_fraction = " << num(t.min_relu_fraction) << "\n";
  switch (cfg.equilibrium_kind) {
    case EquilibriumKind::Origin: out << "equilibrium = origin\n"; break;
    case EquilibriumKind::Auto: out << "equilibrium = auto\n"; break;
    case EquilibriumKind::Explicit: {
      std::string s;
      for (Index i = 0; i < t.equilibrium.size(); ++i) {
        s += (i ? "," : "") + num(t.equilibrium[i]);
      }
      out << "equilibrium = " << s << "\n";
      break;
    }
  }
  out << "update_order = "
      << (t.order == training::UpdateOrder::VFirst ? "v_first" : "f_first")
      << "\n";
  out << "seed = " << t.seed << "\n";
  if (t.checkpoint_interval > 0) {
    out << "checkpoint_interval = " << t.checkpoint_interval << "\n";
  }

  out << "\n[eval]\n";
  std::string hs;
  for (std::size_t i = 0; i < cfg.eval.horizons.size(); ++i) {
    hs += (i ? "," : "") + std::to_string(cfg.eval.horizons[i]);
  }
  out << "horizons = " << hs << "\n";
  out << "seed = " << cfg.eval.seed << "\n";
  out << "scatter_steps = " << cfg.eval.scatter_steps << "\n";

  out << "\n[paths]\n";
  out << "out = " << cfg.paths.out.string() << "\n";
  if (!cfg.paths.data_dir.empty()) {
    out << "data_dir = " << cfg.paths.data_dir.string() << "\n";
  }
  if (!cfg.paths.checkpoint.empty()) {
    out << "checkpoint = " << cfg.paths.checkpoint.string() << "\n";
  }
  if (!cfg.paths.v_checkpoint.empty()) {
    out << "v_checkpoint = " << cfg.paths.v_checkpoint.string() << "\n";
  }
  if (!cfg.paths.truth.empty()) {
    out << "truth = " << cfg.paths.truth.string() << "\n";
  }
  if (!cfg.paths.report_inputs.empty()) {
    std::string s;
    for (std::size_t i = 0; i < cfg.paths.report_inputs.size(); ++i) {
      s += (i ? "," : "") + cfg.paths.report_inputs[i].string();
    }
    out << "report_inputs = " << s << "\n";
  }
  return out.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize(a) == serialize(b);
}

}  // namespace monodyn::cli
