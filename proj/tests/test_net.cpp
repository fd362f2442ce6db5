#include <doctest.h>

#include <cmath>
#include <functional>

#include "monodyn/checkpoint.hpp"
#include "monodyn/net.hpp"

using namespace monodyn;
using namespace monodyn::nn;

namespace {

// Central-difference gradient check over every parameter view. The loss
// closure must re-run the full forward pass so BN batch statistics react to
// the perturbation.
void check_gradients(ParamViews params, const GradViews& grads,
                     const std::function<double()>& loss, double tol = 1e-4) {
  REQUIRE(params.size() == grads.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Index i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      const double h = 1e-5 * std::max(1.0, std::abs(saved));
      params[k][i] = saved + h;
      const double up = loss();
      params[k][i] = saved - h;
      const double down = loss();
      params[k][i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double g = grads[k][i];
      if (std::abs(fd - g) <= 1e-7) continue;  // below the probe's noise
      const double denom = std::max(std::abs(fd), std::abs(g));
      CHECK_MESSAGE(std::abs(fd - g) / denom < tol,
                    "tensor ", k, " entry ", i, ": analytic ", g, " fd ", fd);
    }
  }
}

MatrixXd random_batch(Rng& rng, Index rows, Index cols, double lo = -1.0,
                      double hi = 1.0) {
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = uniform(rng, lo, hi);
  return m;
}

}  // namespace

TEST_CASE("neuron_activation on both sides of zero") {
  CHECK(neuron_activation(2.0, Activation::MaxRelu) == 2.0);
  CHECK(neuron_activation(2.0, Activation::MinRelu) == 0.0);
  CHECK(neuron_activation(-3.0, Activation::MaxRelu) == 0.0);
  CHECK(neuron_activation(-3.0, Activation::MinRelu) == -3.0);
  CHECK(neuron_activation(-3.0, Activation::Linear) == -3.0);
}

TEST_CASE("single neuron hand evaluation") {
  // weights (2, 0.5), bias -1, input (1, 2): pre-activation 2.
  std::vector<DenseLayer> layers(1);
  layers[0].weight = MatrixXd(1, 2);
  layers[0].weight << 2.0, 0.5;
  layers[0].bias = VectorXd::Constant(1, -1.0);
  layers[0].act = {Activation::MaxRelu};
  MonotoneNet net(std::move(layers), ConstraintMode::None);
  MatrixXd in(1, 2);
  in << 1.0, 2.0;
  CHECK(net.forward(in)(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("identity layer and all-zero net") {
  std::vector<DenseLayer> layers(1);
  layers[0].weight = MatrixXd::Identity(3, 3);
  layers[0].bias = VectorXd::Zero(3);
  layers[0].act.assign(3, Activation::Linear);
  MonotoneNet net(std::move(layers), ConstraintMode::None);
  Rng rng = make_rng(1);
  const MatrixXd x = random_batch(rng, 5, 3);
  CHECK((net.forward(x) - x).cwiseAbs().maxCoeff() == 0.0);

  std::vector<DenseLayer> zero(1);
  zero[0].weight = MatrixXd::Zero(2, 3);
  zero[0].bias = VectorXd::Zero(2);
  zero[0].act.assign(2, Activation::MaxRelu);
  MonotoneNet znet(std::move(zero), ConstraintMode::None);
  CHECK(znet.forward(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches an independent straight-line evaluation") {
  Rng rng = make_rng(5);
  NetSpec spec;
  spec.input_dim = 3;
  spec.hidden = {8};
  spec.output_dim = 2;
  spec.min_relu_fraction = 0.5;
  spec.mode = ConstraintMode::None;
  MonotoneNet net = make_net(spec, rng);

  const VectorXd x = random_batch(rng, 1, 3).row(0);
  // Second implementation: plain loops straight off the layer tensors.
  const auto& l0 = net.layers()[0];
  const auto& l1 = net.layers()[1];
  VectorXd h(8);
  for (Index u = 0; u < 8; ++u) {
    double s = l0.bias[u];
    for (Index i = 0; i < 3; ++i) s += l0.weight(u, i) * x[i];
    h[u] = neuron_activation(s, l0.act[static_cast<std::size_t>(u)]);
  }
  VectorXd y(2);
  for (Index o = 0; o < 2; ++o) {
    double s = l1.bias[o];
    for (Index u = 0; u < 8; ++u) s += l1.weight(o, u) * h[u];
    y[o] = s;
  }
  const MatrixXd got = net.forward(x.transpose());
  CHECK((got.row(0).transpose() - y).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("forward rejects dimension mismatch and BN batches of one") {
  Rng rng = make_rng(2);
  NetSpec spec;
  spec.input_dim = 4;
  spec.hidden = {6};
  spec.output_dim = 4;
  spec.batch_norm = true;
  spec.mode = ConstraintMode::BnSoft;
  MonotoneNet net = make_net(spec, rng);
  CHECK_THROWS_AS(net.forward(MatrixXd::Zero(2, 3)), NumericError);
  ForwardCache cache;
  CHECK_THROWS_AS(net.forward_train(MatrixXd::Zero(1, 4), cache),
                  NumericError);
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  Rng rng = make_rng(3);
  NetSpec spec;
  spec.input_dim = 3;
  spec.hidden = {5, 5};
  spec.output_dim = 2;
  spec.mode = ConstraintMode::None;
  MonotoneNet net = make_net(spec, rng);
  ForwardCache cache;
  net.forward_train(random_batch(rng, 4, 3), cache);
  auto grads = net.zero_grads();
  net.backward(cache, MatrixXd::Zero(4, 2), &grads);
  for (const auto& view : MonotoneNet::grad_views(grads)) {
    CHECK(view.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("linear least-squares gradient closed form") {
  // One linear layer, squared loss: dW = 2 (y_hat - y) x^T.
  std::vector<DenseLayer> layers(1);
  layers[0].weight = MatrixXd(1, 2);
  layers[0].weight << 0.3, -0.7;
  layers[0].bias = VectorXd::Zero(1);
  layers[0].act = {Activation::Linear};
  MonotoneNet net(std::move(layers), ConstraintMode::None);
  MatrixXd x(1, 2);
  x << 1.5, -2.0;
  const double target = 0.25;
  ForwardCache cache;
  const MatrixXd pred = net.forward_train(x, cache);
  MatrixXd d_out(1, 1);
  d_out(0, 0) = 2.0 * (pred(0, 0) - target);
  auto grads = net.zero_grads();
  net.backward(cache, d_out, &grads);
  const double residual = pred(0, 0) - target;
  CHECK(grads.layers[0].dweight(0, 0) ==
        doctest::Approx(2.0 * residual * 1.5));
  CHECK(grads.layers[0].dweight(0, 1) ==
        doctest::Approx(2.0 * residual * -2.0));
  CHECK(grads.layers[0].dbias[0] == doctest::Approx(2.0 * residual));
}

TEST_CASE("backprop matches finite differences across layer shapes") {
  Rng rng = make_rng(17);
  for (const bool bn : {false, true}) {
    for (const auto& hidden : {std::vector<int>{16}, std::vector<int>{32, 32},
                               std::vector<int>{16, 16, 16}}) {
      NetSpec spec;
      spec.input_dim = 4;
      spec.hidden = hidden;
      spec.output_dim = 3;
      spec.min_relu_fraction = 0.5;
      spec.batch_norm = bn;
      spec.mode = ConstraintMode::None;
      MonotoneNet net = make_net(spec, rng);

      const MatrixXd batch = random_batch(rng, 6, 4);
      const MatrixXd target = random_batch(rng, 6, 3);
      const auto loss = [&]() {
        ForwardCache c;
        const MatrixXd out = net.forward_train(batch, c, false);
        return 0.5 * (out - target).squaredNorm();
      };
      ForwardCache cache;
      const MatrixXd out = net.forward_train(batch, cache, false);
      auto grads = net.zero_grads();
      net.backward(cache, out - target, &grads);
      check_gradients(net.param_views(), MonotoneNet::grad_views(grads), loss);
    }
  }
}

TEST_CASE("input gradients match finite differences") {
  Rng rng = make_rng(23);
  NetSpec spec;
  spec.input_dim = 3;
  spec.hidden = {12, 12};
  spec.output_dim = 3;
  spec.mode = ConstraintMode::None;
  MonotoneNet net = make_net(spec, rng);
  MatrixXd batch = random_batch(rng, 4, 3);
  const MatrixXd target = random_batch(rng, 4, 3);

  ForwardCache cache;
  const MatrixXd out = net.forward_train(batch, cache, false);
  MatrixXd d_input;
  net.backward(cache, out - target, nullptr, &d_input);

  for (Index r = 0; r < batch.rows(); ++r) {
    for (Index c = 0; c < batch.cols(); ++c) {
      const double saved = batch(r, c);
      const double h = 1e-6;
      batch(r, c) = saved + h;
      ForwardCache cp;
      const double up =
          0.5 * (net.forward_train(batch, cp, false) - target).squaredNorm();
      batch(r, c) = saved - h;
      const double down =
          0.5 * (net.forward_train(batch, cp, false) - target).squaredNorm();
      batch(r, c) = saved;
      const double fd = (up - down) / (2.0 * h);
      CHECK(d_input(r, c) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("lyapunov head picks the max row and routes gradients through it") {
  // Trunk = identity passthrough of 2 features.
  std::vector<DenseLayer> trunk_layers(1);
  trunk_layers[0].weight = MatrixXd::Identity(2, 2);
  trunk_layers[0].bias = VectorXd::Zero(2);
  trunk_layers[0].act.assign(2, Activation::Linear);
  MonotoneNet trunk(std::move(trunk_layers), ConstraintMode::None);
  MatrixXd head = MatrixXd::Identity(2, 2);
  VectorXd bias(2);
  bias << 0.0, 0.5;
  LyapunovNet vnet(std::move(trunk), std::move(head), std::move(bias));

  VectorXd x(2);
  x << 1.0, -1.0;  // candidates (1, -0.5) -> 1
  CHECK(vnet.value(x) == doctest::Approx(1.0));

  LyapunovNet::Cache cache;
  MatrixXd batch = x.transpose();
  vnet.value_train(batch, cache);
  auto grads = vnet.zero_grads();
  vnet.backward(cache, VectorXd::Ones(1), &grads);
  // Only row 0 of the head receives gradient.
  CHECK(grads.dhead_bias[0] == 1.0);
  CHECK(grads.dhead_bias[1] == 0.0);
  CHECK(grads.dhead_weight.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lyapunov output is zero for zero trunk and zero bias") {
  Rng rng = make_rng(31);
  LyapunovNet vnet =
      make_lyapunov_net(3, {8, 8}, 3, 0.5, ConstraintMode::HardZero, rng);
  // Zero the head so all candidates are exactly 0.
  vnet.head_weight().setZero();
  const VectorXd origin = VectorXd::Zero(3);
  CHECK(vnet.value(origin) == 0.0);
}

TEST_CASE("lyapunov gradients match finite differences") {
  Rng rng = make_rng(37);
  LyapunovNet vnet =
      make_lyapunov_net(4, {16, 16}, 4, 0.5, ConstraintMode::None, rng);
  const MatrixXd batch = random_batch(rng, 5, 4);
  const auto loss = [&]() {
    LyapunovNet::Cache c;
    return vnet.value_train(batch, c, false).squaredNorm();
  };
  LyapunovNet::Cache cache;
  const VectorXd v = vnet.value_train(batch, cache, false);
  auto grads = vnet.zero_grads();
  vnet.backward(cache, 2.0 * v, &grads);
  check_gradients(vnet.param_views(), LyapunovNet::grad_views(grads), loss);
}

TEST_CASE("project_nonnegative repairs weights per mode") {
  std::vector<DenseLayer> layers(1);
  layers[0].weight = MatrixXd(1, 3);
  layers[0].weight << -0.5, 0.3, 0.0;
  layers[0].bias = VectorXd::Constant(1, -2.0);
  layers[0].act = {Activation::Linear};

  SUBCASE("hard_zero zeroes negatives, leaves bias alone") {
    MonotoneNet net(std::vector<DenseLayer>{layers}, ConstraintMode::HardZero);
    Rng rng = make_rng(0);
    CHECK(net.project_nonnegative(rng));
    CHECK(net.layers()[0].weight(0, 0) == 0.0);
    CHECK(net.layers()[0].weight(0, 1) == 0.3);
    CHECK(net.layers()[0].weight(0, 2) == 0.0);
    CHECK(net.layers()[0].bias[0] == -2.0);
  }
  SUBCASE("hard_small_random lands in (0, 1e-3]") {
    MonotoneNet net(std::vector<DenseLayer>{layers},
                    ConstraintMode::HardSmallRandom);
    Rng rng = make_rng(123);
    CHECK(net.project_nonnegative(rng));
    const double w = net.layers()[0].weight(0, 0);
    CHECK(w > 0.0);
    CHECK(w <= 1e-3);
    CHECK(net.layers()[0].weight(0, 1) == 0.3);
  }
  SUBCASE("soft modes report a no-op") {
    MonotoneNet net(std::vector<DenseLayer>{layers}, ConstraintMode::None);
    Rng rng = make_rng(0);
    CHECK_FALSE(net.project_nonnegative(rng));
    CHECK(net.layers()[0].weight(0, 0) == -0.5);
  }
}

TEST_CASE("hard-projected nets are monotone on ordered pairs") {
  Rng rng = make_rng(41);
  NetSpec spec;
  spec.input_dim = 4;
  spec.hidden = {24, 24};
  spec.output_dim = 4;
  spec.min_relu_fraction = 0.5;
  spec.mode = ConstraintMode::HardZero;
  MonotoneNet net = make_net(spec, rng);
  // Push biases off zero and re-project so the check is not vacuous.
  for (auto& layer : net.layers()) {
    for (Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = uniform(rng, -0.5, 0.5);
    }
    for (Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] += uniform(rng, -0.01, 0.01);
    }
  }
  net.project_nonnegative(rng);

  int violations = 0;
  for (int k = 0; k < 10000; ++k) {
    VectorXd x(4), d(4);
    for (int i = 0; i < 4; ++i) {
      x[i] = uniform(rng, 0.0, 2.0);
      d[i] = uniform(rng, 0.0, 1.0);
    }
    const VectorXd fx = net.forward(x.transpose()).row(0);
    const VectorXd fy = net.forward((x + d).transpose()).row(0);
    if (((fx - fy).array() > 1e-9).any()) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("max-relu-only nonnegative nets satisfy midpoint convexity") {
  Rng rng = make_rng(43);
  NetSpec spec;
  spec.input_dim = 3;
  spec.hidden = {16, 16};
  spec.output_dim = 2;
  spec.min_relu_fraction = 0.0;
  spec.mode = ConstraintMode::HardZero;
  MonotoneNet net = make_net(spec, rng);
  for (auto& layer : net.layers()) {
    for (Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = uniform(rng, -0.5, 0.5);
    }
  }
  int violations = 0;
  for (int k = 0; k < 10000; ++k) {
    VectorXd x1(3), x2(3);
    for (int i = 0; i < 3; ++i) {
      x1[i] = uniform(rng, -2.0, 2.0);
      x2[i] = uniform(rng, -2.0, 2.0);
    }
    const VectorXd f1 = net.forward(x1.transpose()).row(0);
    const VectorXd f2 = net.forward(x2.transpose()).row(0);
    const VectorXd fm = net.forward((0.5 * (x1 + x2)).transpose()).row(0);
    if ((fm.array() > 0.5 * (f1 + f2).array() + 1e-9).any()) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("adam learning-rate schedule") {
  Adam adam(AdamConfig{1e-4, 0.98, 250, 0.01});
  CHECK(adam.effective_lr() == doctest::Approx(1e-4));
  adam.set_step_count(250);
  CHECK(adam.effective_lr() == doctest::Approx(9.8e-5));
  adam.set_step_count(750);
  CHECK(adam.effective_lr() == doctest::Approx(9.4119e-5).epsilon(1e-4));
}

TEST_CASE("adam aborts on non-finite gradients") {
  VectorXd p = VectorXd::Ones(3);
  VectorXd g = VectorXd::Ones(3);
  g[1] = std::nan("");
  ParamViews params{Eigen::Map<VectorXd>(p.data(), p.size())};
  GradViews grads{Eigen::Map<const VectorXd>(g.data(), g.size())};
  Adam adam(AdamConfig{1e-3});
  CHECK_THROWS_AS(adam.step(params, grads), NumericError);
}

TEST_CASE("adam applies decoupled decay before the update") {
  VectorXd p = VectorXd::Constant(1, 2.0);
  VectorXd g = VectorXd::Zero(1);
  ParamViews params{Eigen::Map<VectorXd>(p.data(), p.size())};
  GradViews grads{Eigen::Map<const VectorXd>(g.data(), g.size())};
  AdamConfig cfg;
  cfg.base_lr = 0.1;
  cfg.weight_decay = 0.5;
  Adam adam(cfg);
  adam.step(params, grads);
  // Zero gradient: only the multiplicative decay acts.
  CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("BN eval-mode forward is bitwise deterministic") {
  Rng rng = make_rng(51);
  NetSpec spec;
  spec.input_dim = 4;
  spec.hidden = {10, 10};
  spec.output_dim = 2;
  spec.batch_norm = true;
  spec.mode = ConstraintMode::BnSoft;
  MonotoneNet net = make_net(spec, rng);
  ForwardCache cache;
  net.forward_train(random_batch(rng, 16, 4), cache);  // moves running stats
  const MatrixXd x = random_batch(rng, 8, 4);
  const MatrixXd a = net.forward(x);
  const MatrixXd b = net.forward(x);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoints round-trip both network kinds") {
  Rng rng = make_rng(61);
  NetSpec spec;
  spec.input_dim = 5;
  spec.hidden = {7, 9};
  spec.output_dim = 5;
  spec.batch_norm = true;
  spec.mode = ConstraintMode::BnSoft;
  MonotoneNet net = make_net(spec, rng);
  ForwardCache cache;
  net.forward_train(random_batch(rng, 8, 5), cache);

  const auto dir = std::filesystem::temp_directory_path() / "monodyn_test";
  std::filesystem::create_directories(dir);
  save_net(dir / "f.ckpt", net, 1234);
  long step = 0;
  const MonotoneNet loaded = load_net(dir / "f.ckpt", &step);
  CHECK(step == 1234);
  CHECK(loaded.mode() == net.mode());
  const MatrixXd probe = random_batch(rng, 6, 5);
  CHECK((loaded.forward(probe) - net.forward(probe)).cwiseAbs().maxCoeff() ==
        0.0);

  LyapunovNet vnet =
      make_lyapunov_net(5, {6, 6}, 5, 0.5, ConstraintMode::None, rng);
  save_lyapunov_net(dir / "v.ckpt", vnet, 77);
  const LyapunovNet vloaded = load_lyapunov_net(dir / "v.ckpt", &step);
  CHECK(step == 77);
  CHECK((vloaded.value(probe) - vnet.value(probe)).cwiseAbs().maxCoeff() ==
        0.0);

  CHECK_THROWS_AS(load_net(dir / "v.ckpt"), IoError);
}

TEST_CASE("lyapunov projection repairs trunk and head weights") {
  Rng rng = make_rng(91);
  LyapunovNet vnet =
      make_lyapunov_net(3, {8}, 3, 0.5, ConstraintMode::HardZero, rng);
  vnet.trunk().layers()[0].weight(0, 0) = -0.4;
  vnet.head_weight()(1, 2) = -0.2;
  CHECK(vnet.project_nonnegative(rng));
  CHECK(vnet.trunk().layers()[0].weight(0, 0) == 0.0);
  CHECK(vnet.head_weight()(1, 2) == 0.0);

  LyapunovNet free =
      make_lyapunov_net(3, {8}, 3, 0.5, ConstraintMode::None, rng);
  free.head_weight()(0, 0) = -0.3;
  CHECK_FALSE(free.project_nonnegative(rng));
  CHECK(free.head_weight()(0, 0) == -0.3);
}
