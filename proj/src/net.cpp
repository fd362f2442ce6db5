#include "monodyn/net.hpp"

#include <cmath>
#include <string>

namespace monodyn::nn {

namespace {

void apply_activation(const std::vector<Activation>& act, MatrixXd& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    switch (act[static_cast<std::size_t>(j)]) {
      case Activation::MaxRelu:
        m.col(j) = m.col(j).cwiseMax(0.0);
        break;
      case Activation::MinRelu:
        m.col(j) = m.col(j).cwiseMin(0.0);
        break;
      case Activation::Linear:
        break;
    }
  }
}

// Subgradient at exactly 0 is taken as 0 for both ReLU variants.
void apply_activation_grad(const std::vector<Activation>& act,
                           const MatrixXd& pre_act, MatrixXd& g) {
  for (Index j = 0; j < g.cols(); ++j) {
    switch (act[static_cast<std::size_t>(j)]) {
      case Activation::MaxRelu:
        g.col(j).array() *= (pre_act.col(j).array() > 0.0).cast<double>();
        break;
      case Activation::MinRelu:
        g.col(j).array() *= (pre_act.col(j).array() < 0.0).cast<double>();
        break;
      case Activation::Linear:
        break;
    }
  }
}

std::vector<Activation> mixed_activations(Index width, double min_fraction) {
  const auto n_min = static_cast<Index>(
      std::lround(static_cast<double>(width) * min_fraction));
  std::vector<Activation> act(static_cast<std::size_t>(width),
                              Activation::MaxRelu);
  for (Index j = width - n_min; j < width; ++j) {
    act[static_cast<std::size_t>(j)] = Activation::MinRelu;
  }
  return act;
}

MatrixXd init_weight(Index out, Index in, ConstraintMode mode, Rng& rng) {
  MatrixXd w(out, in);
  if (mode == ConstraintMode::None) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (Index i = 0; i < out; ++i)
      for (Index j = 0; j < in; ++j) w(i, j) = uniform(rng, -limit, limit);
  } else {
    // Positive and close to zero: uniform on (0, 0.01].
    for (Index i = 0; i < out; ++i)
      for (Index j = 0; j < in; ++j) w(i, j) = 0.01 - uniform(rng, 0.0, 0.01);
  }
  return w;
}

}  // namespace

double neuron_activation(double s, Activation kind) {
  switch (kind) {
    case Activation::MaxRelu:
      return std::max(s, 0.0);
    case Activation::MinRelu:
      return std::min(s, 0.0);
    case Activation::Linear:
      return s;
  }
  return s;
}

MonotoneNet::MonotoneNet(std::vector<DenseLayer> layers, ConstraintMode mode)
    : layers_(std::move(layers)), mode_(mode) {
  if (layers_.empty()) throw ConfigError("net: needs at least one layer");
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    if (layers_[l].out_dim() != layers_[l + 1].in_dim()) {
      throw ConfigError("net: layer " + std::to_string(l) +
                        " output does not feed layer " + std::to_string(l + 1));
    }
  }
  for (const auto& layer : layers_) {
    if (static_cast<Index>(layer.act.size()) != layer.out_dim()) {
      throw ConfigError("net: activation list does not match layer width");
    }
    if (layer.bias.size() != layer.out_dim()) {
      throw ConfigError("net: bias size does not match layer width");
    }
  }
}

MatrixXd MonotoneNet::forward(const MatrixXd& batch) const {
  if (batch.cols() != input_dim()) {
    throw NumericError("forward: batch has " + std::to_string(batch.cols()) +
                       " columns, net expects " + std::to_string(input_dim()));
  }
  MatrixXd x = batch;
  for (const auto& layer : layers_) {
    MatrixXd z(x.rows(), layer.out_dim());
    z.noalias() = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (layer.bn) {
      const auto& bn = *layer.bn;
      const VectorXd inv_std =
          (bn.running_var.array() + BatchNorm::kEps).sqrt().inverse().matrix();
      const VectorXd scale = inv_std.cwiseProduct(bn.gamma);
      z.rowwise() -= bn.running_mean.transpose();
      z = z * scale.asDiagonal();
      z.rowwise() += bn.beta.transpose();
    }
    apply_activation(layer.act, z);
    x = std::move(z);
  }
  return x;
}

MatrixXd MonotoneNet::forward_train(const MatrixXd& batch, ForwardCache& cache,
                                    bool update_running) {
  if (batch.cols() != input_dim()) {
    throw NumericError("forward_train: batch has " +
                       std::to_string(batch.cols()) + " columns, net expects " +
                       std::to_string(input_dim()));
  }
  const Index B = batch.rows();
  cache.training = true;
  cache.layers.assign(layers_.size(), {});
  MatrixXd x = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    auto& c = cache.layers[l];
    c.input = x;
    c.pre.noalias() = x * layer.weight.transpose();
    c.pre.rowwise() += layer.bias.transpose();
    if (layer.bn) {
      if (B < 2) {
        throw NumericError(
            "forward_train: batch normalization needs a batch of size >= 2");
      }
      auto& bn = *layer.bn;
      c.bn_mu = c.pre.colwise().mean().transpose();
      MatrixXd centered = c.pre.rowwise() - c.bn_mu.transpose();
      const VectorXd var =
          centered.array().square().colwise().mean().matrix().transpose();
      c.bn_inv_std = (var.array() + BatchNorm::kEps).sqrt().inverse().matrix();
      c.bn_hat = centered * c.bn_inv_std.asDiagonal();
      c.normed = c.bn_hat * bn.gamma.asDiagonal();
      c.normed.rowwise() += bn.beta.transpose();
      if (update_running) {
        bn.running_mean = BatchNorm::kMomentum * bn.running_mean +
                          (1.0 - BatchNorm::kMomentum) * c.bn_mu;
        bn.running_var = BatchNorm::kMomentum * bn.running_var +
                         (1.0 - BatchNorm::kMomentum) * var;
      }
    } else {
      c.normed = c.pre;
    }
    x = c.normed;
    apply_activation(layer.act, x);
  }
  cache.output = x;
  return x;
}

void MonotoneNet::backward(const ForwardCache& cache, const MatrixXd& d_output,
                           NetGrads* grads, MatrixXd* d_input) const {
  if (cache.layers.size() != layers_.size()) {
    throw NumericError("backward: cache does not match this network");
  }
  MatrixXd g = d_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const auto& c = cache.layers[l];
    apply_activation_grad(layer.act, c.normed, g);
    if (layer.bn) {
      const auto& bn = *layer.bn;
      const double B = static_cast<double>(c.input.rows());
      if (grads) {
        auto& lg = grads->layers[l];
        lg.dgamma += (g.array() * c.bn_hat.array())
                         .colwise()
                         .sum()
                         .matrix()
                         .transpose();
        lg.dbeta += g.colwise().sum().transpose();
      }
      // Backward through the batch statistics.
      MatrixXd dhat = g * bn.gamma.asDiagonal();
      const VectorXd sum_dhat = dhat.colwise().sum().transpose();
      const VectorXd sum_dhat_hat =
          (dhat.array() * c.bn_hat.array()).colwise().sum().matrix().transpose();
      MatrixXd dz = B * dhat;
      dz.rowwise() -= sum_dhat.transpose();
      dz -= c.bn_hat * sum_dhat_hat.asDiagonal();
      dz = dz * (c.bn_inv_std / B).asDiagonal();
      g = std::move(dz);
    }
    if (grads) {
      auto& lg = grads->layers[l];
      lg.dweight.noalias() += g.transpose() * c.input;
      lg.dbias += g.colwise().sum().transpose();
    }
    if (l > 0) {
      g = (g * layer.weight).eval();
    } else if (d_input) {
      d_input->noalias() = g * layer.weight;
    }
  }
}

NetGrads MonotoneNet::zero_grads() const {
  NetGrads grads;
  grads.layers.reserve(layers_.size());
  for (const auto& layer : layers_) {
    LayerGrads lg;
    lg.dweight = MatrixXd::Zero(layer.out_dim(), layer.in_dim());
    lg.dbias = VectorXd::Zero(layer.out_dim());
    if (layer.bn) {
      lg.dgamma = VectorXd::Zero(layer.out_dim());
      lg.dbeta = VectorXd::Zero(layer.out_dim());
    }
    grads.layers.push_back(std::move(lg));
  }
  return grads;
}

ParamViews MonotoneNet::param_views() {
  ParamViews views;
  for (auto& layer : layers_) {
    views.emplace_back(layer.weight.data(), layer.weight.size());
    views.emplace_back(layer.bias.data(), layer.bias.size());
    if (layer.bn) {
      views.emplace_back(layer.bn->gamma.data(), layer.bn->gamma.size());
      views.emplace_back(layer.bn->beta.data(), layer.bn->beta.size());
    }
  }
  return views;
}

GradViews MonotoneNet::grad_views(const NetGrads& grads) {
  GradViews views;
  for (const auto& lg : grads.layers) {
    views.emplace_back(lg.dweight.data(), lg.dweight.size());
    views.emplace_back(lg.dbias.data(), lg.dbias.size());
    if (lg.dgamma.size() > 0) {
      views.emplace_back(lg.dgamma.data(), lg.dgamma.size());
      views.emplace_back(lg.dbeta.data(), lg.dbeta.size());
    }
  }
  return views;
}

bool MonotoneNet::project_nonnegative(Rng& rng) {
  if (mode_ != ConstraintMode::HardZero &&
      mode_ != ConstraintMode::HardSmallRandom) {
    return false;
  }
  const auto repair = [&](double& w) {
    if (w < 0.0) {
      w = mode_ == ConstraintMode::HardZero
              ? 0.0
              : 1e-3 - uniform(rng, 0.0, 1e-3);  // lands in (0, 1e-3]
    }
  };
  for (auto& layer : layers_) {
    for (Index i = 0; i < layer.weight.size(); ++i) {
      repair(layer.weight.data()[i]);
    }
    if (layer.bn) {
      for (Index j = 0; j < layer.bn->gamma.size(); ++j) {
        repair(layer.bn->gamma[j]);
      }
    }
  }
  return true;
}

MonotoneNet make_net(const NetSpec& spec, Rng& rng) {
  if (spec.hidden.empty() && spec.output_dim == 0) {
    throw ConfigError("make_net: network would have no layers");
  }
  std::vector<DenseLayer> layers;
  Index in = spec.input_dim;
  for (int width : spec.hidden) {
    DenseLayer layer;
    layer.weight = init_weight(width, in, spec.mode, rng);
    layer.bias = VectorXd::Zero(width);
    layer.act = mixed_activations(width, spec.min_relu_fraction);
    if (spec.batch_norm) layer.bn = BatchNorm::make(width);
    in = width;
    layers.push_back(std::move(layer));
  }
  if (spec.output_dim > 0) {
    DenseLayer out;
    out.weight = init_weight(spec.output_dim, in, spec.mode, rng);
    out.bias = VectorXd::Zero(spec.output_dim);
    out.act.assign(static_cast<std::size_t>(spec.output_dim),
                   Activation::Linear);
    layers.push_back(std::move(out));
  }
  return MonotoneNet(std::move(layers), spec.mode);
}

LyapunovNet::LyapunovNet(MonotoneNet trunk, MatrixXd head_weight,
                         VectorXd head_bias)
    : trunk_(std::move(trunk)),
      head_weight_(std::move(head_weight)),
      head_bias_(std::move(head_bias)) {
  if (head_weight_.cols() != trunk_.output_dim() ||
      head_weight_.rows() != head_bias_.size()) {
    throw ConfigError("lyapunov net: head shape does not match trunk");
  }
}

VectorXd LyapunovNet::value(const MatrixXd& states) const {
  const MatrixXd feats = trunk_.forward(states);
  MatrixXd scores = feats * head_weight_.transpose();
  scores.rowwise() += head_bias_.transpose();
  return scores.rowwise().maxCoeff();
}

double LyapunovNet::value(const VectorXd& state) const {
  return value(MatrixXd(state.transpose()))[0];
}

VectorXd LyapunovNet::value_train(const MatrixXd& states, Cache& cache,
                                  bool update_running) {
  cache.features = trunk_.forward_train(states, cache.trunk, update_running);
  MatrixXd scores = cache.features * head_weight_.transpose();
  scores.rowwise() += head_bias_.transpose();
  const Index B = scores.rows();
  cache.best.resize(static_cast<std::size_t>(B));
  VectorXd out(B);
  for (Index r = 0; r < B; ++r) {
    Index best = 0;
    scores.row(r).maxCoeff(&best);  // Eigen reports the lowest tied index
    cache.best[static_cast<std::size_t>(r)] = best;
    out[r] = scores(r, best);
  }
  return out;
}

void LyapunovNet::backward(const Cache& cache, const VectorXd& d_output,
                           Grads* grads, MatrixXd* d_input) const {
  const Index B = cache.features.rows();
  MatrixXd d_feats = MatrixXd::Zero(B, trunk_.output_dim());
  for (Index r = 0; r < B; ++r) {
    const Index row = cache.best[static_cast<std::size_t>(r)];
    if (grads) {
      grads->dhead_weight.row(row) += d_output[r] * cache.features.row(r);
      grads->dhead_bias[row] += d_output[r];
    }
    d_feats.row(r) = d_output[r] * head_weight_.row(row);
  }
  trunk_.backward(cache.trunk, d_feats, grads ? &grads->trunk : nullptr,
                  d_input);
}

LyapunovNet::Grads LyapunovNet::zero_grads() const {
  Grads g;
  g.trunk = trunk_.zero_grads();
  g.dhead_weight = MatrixXd::Zero(head_weight_.rows(), head_weight_.cols());
  g.dhead_bias = VectorXd::Zero(head_bias_.size());
  return g;
}

ParamViews LyapunovNet::param_views() {
  ParamViews views = trunk_.param_views();
  views.emplace_back(head_weight_.data(), head_weight_.size());
  views.emplace_back(head_bias_.data(), head_bias_.size());
  return views;
}

GradViews LyapunovNet::grad_views(const Grads& grads) {
  GradViews views = MonotoneNet::grad_views(grads.trunk);
  views.emplace_back(grads.dhead_weight.data(), grads.dhead_weight.size());
  views.emplace_back(grads.dhead_bias.data(), grads.dhead_bias.size());
  return views;
}

bool LyapunovNet::project_nonnegative(Rng& rng) {
  if (!trunk_.project_nonnegative(rng)) return false;
  const bool zero_mode = trunk_.mode() == ConstraintMode::HardZero;
  for (Index i = 0; i < head_weight_.size(); ++i) {
    double& w = head_weight_.data()[i];
    if (w < 0.0) {
      w = zero_mode ? 0.0 : 1e-3 - uniform(rng, 0.0, 1e-3);
    }
  }
  return true;
}

LyapunovNet make_lyapunov_net(Index input_dim, const std::vector<int>& hidden,
                              Index head_rows, double min_relu_fraction,
                              ConstraintMode mode, Rng& rng) {
  if (hidden.empty()) {
    throw ConfigError("lyapunov net: needs at least one hidden layer");
  }
  NetSpec spec;
  spec.input_dim = input_dim;
  spec.hidden = hidden;
  spec.output_dim = 0;  // the head replaces the linear output layer
  spec.min_relu_fraction = min_relu_fraction;
  spec.mode = mode;
  MonotoneNet trunk = make_net(spec, rng);
  const Index h = trunk.output_dim();
  MatrixXd head = init_weight(head_rows, h, mode, rng);
  return LyapunovNet(std::move(trunk), std::move(head),
                     VectorXd::Zero(head_rows));
}

double Adam::effective_lr() const {
  return cfg_.base_lr *
         std::pow(cfg_.decay_rate,
                  static_cast<double>(step_ / cfg_.decay_interval));
}

void Adam::step(ParamViews params, const GradViews& grads) {
  if (params.size() != grads.size()) {
    throw NumericError("adam: parameter/gradient tensor counts differ");
  }
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(VectorXd::Zero(p.size()));
      v_.push_back(VectorXd::Zero(p.size()));
    }
  }
  const double lr = effective_lr();
  const double t = static_cast<double>(step_ + 1);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size()) {
      throw NumericError("adam: tensor " + std::to_string(k) +
                         " shape mismatch");
    }
    if (!grads[k].allFinite()) {
      throw NumericError("adam: non-finite gradient in tensor " +
                         std::to_string(k) + " at step " +
                         std::to_string(step_));
    }
    params[k] *= (1.0 - lr * cfg_.weight_decay);
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * grads[k];
    v_[k] = cfg_.beta2 * v_[k] +
            (1.0 - cfg_.beta2) * grads[k].array().square().matrix();
    params[k].array() -= lr * (m_[k].array() / bc1) /
                         ((v_[k].array() / bc2).sqrt() + cfg_.eps);
  }
  ++step_;
}

}  // namespace monodyn::nn
