#include "monodyn/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include "monodyn/csv.hpp"

namespace monodyn::nn {

namespace {

constexpr const char* kNetMagic = "MONODYN-NET 1";
constexpr const char* kVNetMagic = "MONODYN-VNET 1";

const char* mode_name(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::HardZero: return "hard_zero";
    case ConstraintMode::HardSmallRandom: return "hard_small_random";
    case ConstraintMode::BnSoft: return "bn_soft";
    case ConstraintMode::None: return "none";
  }
  return "none";
}

ConstraintMode mode_from_name(const std::string& s) {
  if (s == "hard_zero") return ConstraintMode::HardZero;
  if (s == "hard_small_random") return ConstraintMode::HardSmallRandom;
  if (s == "bn_soft") return ConstraintMode::BnSoft;
  if (s == "none") return ConstraintMode::None;
  throw IoError("checkpoint: unknown constraint mode '" + s + "'");
}

char act_code(Activation a) {
  switch (a) {
    case Activation::MaxRelu: return 'M';
    case Activation::MinRelu: return 'm';
    case Activation::Linear: return 'l';
  }
  return 'l';
}

Activation act_from_code(char c) {
  switch (c) {
    case 'M': return Activation::MaxRelu;
    case 'm': return Activation::MinRelu;
    case 'l': return Activation::Linear;
  }
  throw IoError(std::string("checkpoint: unknown activation code '") + c +
                "'");
}

void write_values(std::ostream& out, const double* data, Index n) {
  for (Index i = 0; i < n; ++i) {
    out << (i ? " " : "") << csv::format_double(data[i]);
  }
  out << "\n";
}

void read_values(std::istream& in, double* data, Index n,
                 const std::string& what) {
  for (Index i = 0; i < n; ++i) {
    if (!(in >> data[i])) {
      throw IoError("checkpoint: truncated while reading " + what);
    }
  }
}

void expect(std::istream& in, const std::string& token,
            const std::string& context) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw IoError("checkpoint: expected '" + token + "' in " + context +
                  ", got '" + got + "'");
  }
}

void write_layers(std::ostream& out, const MonotoneNet& net) {
  out << "mode " << mode_name(net.mode()) << "\n";
  out << "layers " << net.layers().size() << "\n";
  for (const auto& layer : net.layers()) {
    out << "layer " << layer.in_dim() << " " << layer.out_dim() << " ";
    for (auto a : layer.act) out << act_code(a);
    out << " bn " << (layer.bn ? 1 : 0) << "\n";
    write_values(out, layer.weight.data(), layer.weight.size());
    write_values(out, layer.bias.data(), layer.bias.size());
    if (layer.bn) {
      write_values(out, layer.bn->gamma.data(), layer.bn->gamma.size());
      write_values(out, layer.bn->beta.data(), layer.bn->beta.size());
      write_values(out, layer.bn->running_mean.data(),
                   layer.bn->running_mean.size());
      write_values(out, layer.bn->running_var.data(),
                   layer.bn->running_var.size());
    }
  }
}

MonotoneNet read_layers(std::istream& in) {
  expect(in, "mode", "net body");
  std::string mode_str;
  in >> mode_str;
  const ConstraintMode mode = mode_from_name(mode_str);
  expect(in, "layers", "net body");
  std::size_t n_layers = 0;
  in >> n_layers;
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < n_layers; ++l) {
    expect(in, "layer", "layer header");
    Index in_dim = 0, out_dim = 0;
    std::string acts;
    in >> in_dim >> out_dim >> acts;
    expect(in, "bn", "layer header");
    int has_bn = 0;
    in >> has_bn;
    if (static_cast<Index>(acts.size()) != out_dim) {
      throw IoError("checkpoint: activation string does not match layer");
    }
    DenseLayer layer;
    layer.weight.resize(out_dim, in_dim);
    layer.bias.resize(out_dim);
    layer.act.reserve(acts.size());
    for (char c : acts) layer.act.push_back(act_from_code(c));
    read_values(in, layer.weight.data(), layer.weight.size(), "weights");
    read_values(in, layer.bias.data(), layer.bias.size(), "biases");
    if (has_bn) {
      BatchNorm bn = BatchNorm::make(out_dim);
      read_values(in, bn.gamma.data(), bn.gamma.size(), "bn gamma");
      read_values(in, bn.beta.data(), bn.beta.size(), "bn beta");
      read_values(in, bn.running_mean.data(), bn.running_mean.size(),
                  "bn running mean");
      read_values(in, bn.running_var.data(), bn.running_var.size(),
                  "bn running var");
      layer.bn = std::move(bn);
    }
    layers.push_back(std::move(layer));
  }
  return MonotoneNet(std::move(layers), mode);
}

}  // namespace

void save_net(const std::filesystem::path& path, const MonotoneNet& net,
              long train_step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << kNetMagic << "\n";
  out << "step " << train_step << "\n";
  write_layers(out, net);
  if (!out) throw IoError("write failed: " + path.string());
}

MonotoneNet load_net(const std::filesystem::path& path, long* train_step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kNetMagic) {
    throw IoError("not a network checkpoint: " + path.string());
  }
  expect(in, "step", "header");
  long step = 0;
  in >> step;
  if (train_step) *train_step = step;
  return read_layers(in);
}

void save_lyapunov_net(const std::filesystem::path& path,
                       const LyapunovNet& net, long train_step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << kVNetMagic << "\n";
  out << "step " << train_step << "\n";
  write_layers(out, net.trunk());
  out << "head " << net.head_weight().rows() << " " << net.head_weight().cols()
      << "\n";
  write_values(out, net.head_weight().data(), net.head_weight().size());
  write_values(out, net.head_bias().data(), net.head_bias().size());
  if (!out) throw IoError("write failed: " + path.string());
}

LyapunovNet load_lyapunov_net(const std::filesystem::path& path,
                              long* train_step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kVNetMagic) {
    throw IoError("not a Lyapunov checkpoint: " + path.string());
  }
  expect(in, "step", "header");
  long step = 0;
  in >> step;
  if (train_step) *train_step = step;
  MonotoneNet trunk = read_layers(in);
  expect(in, "head", "head header");
  Index rows = 0, cols = 0;
  in >> rows >> cols;
  MatrixXd head(rows, cols);
  VectorXd bias(rows);
  read_values(in, head.data(), head.size(), "head weights");
  read_values(in, bias.data(), bias.size(), "head bias");
  return LyapunovNet(std::move(trunk), std::move(head), std::move(bias));
}

}  // namespace monodyn::nn
