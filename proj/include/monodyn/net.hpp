#pragma once

#include <optional>
#include <vector>

#include "monodyn/common.hpp"

namespace monodyn::nn {

enum class Activation { MaxRelu, MinRelu, Linear };
enum class ConstraintMode { HardZero, HardSmallRandom, BnSoft, None };

double neuron_activation(double s, Activation kind);

// Pre-activation batch normalization. Training passes normalize with batch
// statistics; eval passes use the running estimates.
struct BatchNorm {
  VectorXd gamma;
  VectorXd beta;
  VectorXd running_mean;
  VectorXd running_var;
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.99;

  static BatchNorm make(Index width) {
    return BatchNorm{VectorXd::Ones(width), VectorXd::Zero(width),
                     VectorXd::Zero(width), VectorXd::Ones(width)};
  }
};

struct DenseLayer {
  MatrixXd weight;  // out x in
  VectorXd bias;
  std::vector<Activation> act;  // per neuron
  std::optional<BatchNorm> bn;

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

struct LayerCache {
  MatrixXd input;      // batch x in
  MatrixXd pre;        // batch x out, before BN
  MatrixXd normed;     // after BN (or pre when no BN); activation input
  MatrixXd bn_hat;     // normalized values before scale/shift
  VectorXd bn_mu;      // statistics the pass actually used
  VectorXd bn_inv_std;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  MatrixXd output;
  bool training = false;
};

struct LayerGrads {
  MatrixXd dweight;
  VectorXd dbias;
  VectorXd dgamma;
  VectorXd dbeta;
};

struct NetGrads {
  std::vector<LayerGrads> layers;
};

// Mutable flat views over a network's tensors, in a fixed order shared with
// the matching gradient views. The optimizer and checkpoint code iterate
// these rather than knowing the layer structure.
using ParamViews = std::vector<Eigen::Map<VectorXd>>;
using GradViews = std::vector<Eigen::Map<const VectorXd>>;

class MonotoneNet {
 public:
  MonotoneNet() = default;
  MonotoneNet(std::vector<DenseLayer> layers, ConstraintMode mode);

  Index input_dim() const { return layers_.front().in_dim(); }
  Index output_dim() const { return layers_.back().out_dim(); }
  ConstraintMode mode() const { return mode_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // Eval-mode forward pass; deterministic, BN uses running statistics.
  MatrixXd forward(const MatrixXd& batch) const;

  // Training-mode forward pass; BN uses batch statistics and, when
  // update_running is set, folds them into the running estimates.
  MatrixXd forward_train(const MatrixXd& batch, ForwardCache& cache,
                         bool update_running = true);

  // Accumulates parameter gradients for the cached pass into grads (which
  // must be zero-initialized or hold a partial sum). When grads is null only
  // d_input is produced. d_input, if non-null, receives dL/d(batch).
  void backward(const ForwardCache& cache, const MatrixXd& d_output,
                NetGrads* grads, MatrixXd* d_input = nullptr) const;

  NetGrads zero_grads() const;
  ParamViews param_views();
  static GradViews grad_views(const NetGrads& grads);

  // Resets negative inter-neuron weights (and BN scale) after an update.
  // Biases and BN shift are never touched. Returns false (a warning flag)
  // when the constraint mode calls for no projection.
  bool project_nonnegative(Rng& rng);

 private:
  std::vector<DenseLayer> layers_;
  ConstraintMode mode_ = ConstraintMode::None;
};

struct NetSpec {
  Index input_dim = 1;
  std::vector<int> hidden;
  Index output_dim = 1;            // 0: no linear output layer (trunk style)
  double min_relu_fraction = 0.5;  // tail fraction of each hidden layer
  bool batch_norm = false;
  ConstraintMode mode = ConstraintMode::None;
};

// Constrained modes initialize weights uniform on (0, 0.01]; the
// unconstrained baseline uses Kaiming-style fan-in scaling. Biases start at
// zero.
MonotoneNet make_net(const NetSpec& spec, Rng& rng);

// Scalar-valued network: a trunk whose final activations feed a head of n
// affine rows; the output is the row maximum. Gradient flows only through
// the arg-max row, ties broken by lowest index.
class LyapunovNet {
 public:
  LyapunovNet() = default;
  LyapunovNet(MonotoneNet trunk, MatrixXd head_weight, VectorXd head_bias);

  Index input_dim() const { return trunk_.input_dim(); }
  const MonotoneNet& trunk() const { return trunk_; }
  MonotoneNet& trunk() { return trunk_; }
  const MatrixXd& head_weight() const { return head_weight_; }
  MatrixXd& head_weight() { return head_weight_; }
  const VectorXd& head_bias() const { return head_bias_; }
  VectorXd& head_bias() { return head_bias_; }

  VectorXd value(const MatrixXd& states) const;
  double value(const VectorXd& state) const;

  struct Cache {
    ForwardCache trunk;
    MatrixXd features;        // batch x h
    std::vector<Index> best;  // arg-max row per sample
  };
  struct Grads {
    NetGrads trunk;
    MatrixXd dhead_weight;
    VectorXd dhead_bias;
  };

  VectorXd value_train(const MatrixXd& states, Cache& cache,
                       bool update_running = true);
  void backward(const Cache& cache, const VectorXd& d_output, Grads* grads,
                MatrixXd* d_input = nullptr) const;

  Grads zero_grads() const;
  ParamViews param_views();
  static GradViews grad_views(const Grads& grads);

  // Repairs negative trunk and head weights under the trunk's hard modes,
  // keeping the value function monotone non-decreasing on the orthant.
  bool project_nonnegative(Rng& rng);

 private:
  MonotoneNet trunk_;
  MatrixXd head_weight_;  // n x h
  VectorXd head_bias_;    // n
};

LyapunovNet make_lyapunov_net(Index input_dim, const std::vector<int>& hidden,
                              Index head_rows, double min_relu_fraction,
                              ConstraintMode mode, Rng& rng);

struct AdamConfig {
  double base_lr = 1e-4;
  double decay_rate = 0.98;
  long decay_interval = 250;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with an exponential step schedule and decoupled weight decay applied
// before the update delta.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  double effective_lr() const;
  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }

  void step(ParamViews params, const GradViews& grads);

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<VectorXd> m_;
  std::vector<VectorXd> v_;
};

}  // namespace monodyn::nn
