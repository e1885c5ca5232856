#include <cstring>
#include <doctest.h>

#include <cmath>

#include "momo/adam.hpp"
#include "momo/fd_check.hpp"
#include "momo/nn.hpp"

using namespace momo;
using nn::ArchMode;
using nn::Architecture;
using nn::DenseNet;

namespace {

Architecture arch(int in, int out, std::vector<int> hidden, ArchMode mode,
                  bool norm) {
  Architecture a;
  a.input_dim = in;
  a.output_dim = out;
  a.hidden = std::move(hidden);
  a.mode = mode;
  a.layer_norm = norm;
  return a;
}

// Straight-line scalar evaluation reading the flat parameter vector
// directly; independent of the Eigen forward path.
std::vector<double> naive_forward(const DenseNet& net,
                                  const std::vector<double>& x0) {
  const auto& layers = net.layers();
  const auto& layout = net.layout();
  const double* theta = net.params().data();
  auto find = [&](const std::string& name) -> const nn::ParamEntry& {
    for (const auto& e : layout)
      if (e.name == name) return e;
    throw std::runtime_error("missing param " + name);
  };
  std::vector<double> h = x0;
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto& ls = layers[l];
    std::vector<double> in = h;
    if (ls.concat_input) in.insert(in.end(), x0.begin(), x0.end());
    const auto& we = find("layer" + std::to_string(l) + ".W");
    const auto& be = find("layer" + std::to_string(l) + ".b");
    std::vector<double> z(ls.out);
    for (int j = 0; j < ls.out; ++j) {
      double acc = theta[be.offset + j];
      for (int k = 0; k < ls.in; ++k)
        acc += theta[we.offset + k * ls.out + j] * in[k];  // col-major
      z[j] = acc;
    }
    if (ls.norm) {
      const auto& ge = find("layer" + std::to_string(l) + ".gain");
      const auto& se = find("layer" + std::to_string(l) + ".shift");
      double mu = 0;
      for (double v : z) mu += v;
      mu /= ls.out;
      double var = 0;
      for (double v : z) var += (v - mu) * (v - mu);
      var /= ls.out;
      const double rstd = 1.0 / std::sqrt(var + nn::kLayerNormEps);
      for (int j = 0; j < ls.out; ++j)
        z[j] = theta[ge.offset + j] * (z[j] - mu) * rstd + theta[se.offset + j];
    }
    if (ls.relu)
      for (double& v : z) v = v > 0 ? v : 0;
    h = std::move(z);
  }
  return h;
}

double quadratic_loss(DenseNet& net, const Mat& X, const Mat& target,
                      Vec* grad) {
  nn::BatchTape tape;
  Mat Y = net.forward_batch(X, &tape);
  Mat R = Y - target;
  if (grad) net.backward_batch(tape, R, grad, false);
  return 0.5 * R.squaredNorm();
}

}  // namespace

TEST_SUITE_BEGIN("nncore");

TEST_CASE("identity linear layer reproduces its input") {
  DenseNet net(arch(2, 2, {}, ArchMode::Plain, false));
  net.params().setZero();
  // W = I (col-major 2x2)
  net.params()[0] = 1.0;
  net.params()[3] = 1.0;
  net.mark_params_changed();
  Vec x(2);
  x << 1.0, 2.0;
  Vec y = net.forward(x);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(2.0));
}

TEST_CASE("zero-parameter net maps everything to zero") {
  DenseNet net(arch(3, 2, {4}, ArchMode::Plain, false));
  Rng rng(1);
  Vec x(3);
  for (int i = 0; i < 3; ++i) x[i] = rng.normal();
  CHECK(net.forward(x).norm() == 0.0);
}

TEST_CASE("forward matches a straight-line scalar reimplementation") {
  for (auto mode : {ArchMode::Plain, ArchMode::D2rl}) {
    for (bool norm : {false, true}) {
      DenseNet net(arch(3, 2, {8, 8}, mode, norm));
      Rng rng(7);
      net.init_params(rng);
      Vec x(3);
      x << 0.3, -1.1, 0.45;
      const Vec y = net.forward(x);
      const auto ref = naive_forward(net, {0.3, -1.1, 0.45});
      REQUIRE(ref.size() == 2);
      CHECK(y[0] == doctest::Approx(ref[0]).epsilon(1e-12));
      CHECK(y[1] == doctest::Approx(ref[1]).epsilon(1e-12));
    }
  }
}

TEST_CASE("linear layer analytic gradients") {
  // y = Wx + b, dy = e_i  =>  dL/db = e_i, dL/dW = e_i x^T
  DenseNet net(arch(3, 2, {}, ArchMode::Plain, false));
  Rng rng(3);
  net.init_params(rng);
  Vec x(3);
  x << 0.5, -2.0, 1.5;
  nn::BatchTape tape;
  net.forward(x, &tape);
  Vec dy(2);
  dy << 1.0, 0.0;  // e_0
  Vec grad = Vec::Zero(net.param_count());
  Vec dx = net.backward(tape, dy, grad);

  // layout: W (2x3 col-major) then b
  for (int k = 0; k < 3; ++k) {
    CHECK(grad[k * 2 + 0] == doctest::Approx(x[k]));  // row 0 of dW
    CHECK(grad[k * 2 + 1] == doctest::Approx(0.0));
  }
  CHECK(grad[6] == doctest::Approx(1.0));  // db
  CHECK(grad[7] == doctest::Approx(0.0));
  // dx = W^T e_0 = first row of W
  for (int k = 0; k < 3; ++k)
    CHECK(dx[k] == doctest::Approx(net.params()[k * 2 + 0]));
}

TEST_CASE("relu with all-negative pre-activations blocks the gradient") {
  DenseNet net(arch(2, 1, {4}, ArchMode::Plain, false));
  Rng rng(5);
  net.init_params(rng);
  // force negative pre-activations via biases
  for (int j = 0; j < 4; ++j) net.params()[2 * 4 + j] = -100.0;
  net.mark_params_changed();
  Vec x(2);
  x << 0.1, 0.2;
  nn::BatchTape tape;
  net.forward(x, &tape);
  Vec grad = Vec::Zero(net.param_count());
  Vec dy(1);
  dy << 1.0;
  Vec dx = net.backward(tape, dy, grad);
  CHECK(dx.norm() == 0.0);
}

TEST_CASE("analytic gradients match finite differences on 20+ seeds") {
  int checked = 0;
  for (auto mode : {ArchMode::Plain, ArchMode::D2rl}) {
    for (bool norm : {false, true}) {
      for (int seed = 0; seed < 6; ++seed) {
        DenseNet net(arch(3, 2, {6, 5}, mode, norm));
        Rng rng(100 + seed);
        net.init_params(rng);
        Mat X(3, 4), T(2, 4);
        for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
        for (int i = 0; i < T.size(); ++i) T.data()[i] = rng.normal();
        Vec grad = Vec::Zero(net.param_count());
        quadratic_loss(net, X, T, &grad);
        auto rep = nn::finite_difference_check(
            net, [&] { return quadratic_loss(net, X, T, nullptr); }, grad,
            1e-3);
        INFO("mode=", mode == ArchMode::D2rl ? "d2rl" : "plain",
             " norm=", norm, " seed=", seed, " worst=", rep.worst_param,
             " err=", rep.max_rel_err);
        CHECK(rep.pass);
        ++checked;
      }
    }
  }
  CHECK(checked >= 20);
}

TEST_CASE("layer norm forward") {
  SUBCASE("constant vector maps to the shift") {
    Vec x = Vec::Constant(5, 3.7);
    Vec out = nn::layer_norm_forward(x, Vec::Ones(5), Vec::Zero(5));
    CHECK(out.norm() == 0.0);
  }
  SUBCASE("already-normalized input is preserved") {
    Vec x(2);
    x << -1.0, 1.0;
    Vec out = nn::layer_norm_forward(x, Vec::Ones(2), Vec::Zero(2));
    CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("output mean is zero") {
    Rng rng(11);
    Vec x(9);
    for (int i = 0; i < 9; ++i) x[i] = 3.0 * rng.normal() + 1.0;
    Vec out = nn::layer_norm_forward(x, Vec::Ones(9), Vec::Zero(9));
    CHECK(std::abs(out.mean()) < 1e-6);
  }
  SUBCASE("length mismatch is a contract violation") {
    CHECK_THROWS_AS(
        nn::layer_norm_forward(Vec::Ones(3), Vec::Ones(4), Vec::Zero(3)),
        ContractViolation);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    DenseNet net(arch(2, 2, {4}, ArchMode::Plain, false));
    Rng rng(2);
    net.init_params(rng);
    const Vec before = net.params();
    nn::AdamState opt(net.param_count());
    nn::adam_step(net, Vec::Zero(net.param_count()), opt);
    CHECK(net.params() == before);
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("constant gradient moves against its sign") {
    Vec p = Vec::Constant(1, 0.0);
    nn::AdamState opt(1);
    const Vec g = Vec::Constant(1, 2.5);
    for (int i = 0; i < 100; ++i) opt.step(p, g);
    CHECK(p[0] < 0.0);
    nn::AdamState opt2(1);
    Vec p2 = Vec::Constant(1, 0.0);
    const Vec g2 = Vec::Constant(1, -0.3);
    for (int i = 0; i < 100; ++i) opt2.step(p2, g2);
    CHECK(p2[0] > 0.0);
  }
  SUBCASE("first-step magnitude is about lr") {
    // bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g)
    Vec p = Vec::Constant(1, 1.0);
    nn::AdamState opt(1);
    opt.step(p, Vec::Constant(1, 0.37));
    CHECK(std::abs(p[0] - 1.0) == doctest::Approx(3e-4).epsilon(1e-3));
  }
  SUBCASE("non-finite gradient names the parameter") {
    DenseNet net(arch(2, 1, {3}, ArchMode::Plain, false));
    nn::AdamState opt(net.param_count());
    Vec g = Vec::Zero(net.param_count());
    g[net.param_count() - 1] = std::numeric_limits<double>::quiet_NaN();
    try {
      nn::adam_step(net, g, opt);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(e.param() == "layer1.b");
    }
  }
}

TEST_CASE("finite-difference harness flags a corrupted gradient") {
  DenseNet net(arch(2, 1, {4}, ArchMode::Plain, false));
  Rng rng(9);
  net.init_params(rng);
  Mat X(2, 3), T(1, 3);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  for (int i = 0; i < T.size(); ++i) T.data()[i] = rng.normal();
  Vec grad = Vec::Zero(net.param_count());
  quadratic_loss(net, X, T, &grad);
  // find a clearly nonzero component and double it
  long worst = 0;
  grad.cwiseAbs().maxCoeff(&worst);
  grad[worst] *= 2.0;
  auto rep = nn::finite_difference_check(
      net, [&] { return quadratic_loss(net, X, T, nullptr); }, grad, 1e-3);
  CHECK_FALSE(rep.pass);
}

TEST_CASE("quadratic loss on a linear net passes at tight tolerance") {
  DenseNet net(arch(3, 2, {}, ArchMode::Plain, false));
  Rng rng(13);
  net.init_params(rng);
  Mat X(3, 5), T(2, 5);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  for (int i = 0; i < T.size(); ++i) T.data()[i] = rng.normal();
  Vec grad = Vec::Zero(net.param_count());
  quadratic_loss(net, X, T, &grad);
  auto rep = nn::finite_difference_check(
      net, [&] { return quadratic_loss(net, X, T, nullptr); }, grad, 1e-5);
  CHECK(rep.pass);
}

TEST_CASE("determinism: identical runs produce bit-identical results") {
  auto run = [] {
    DenseNet net(arch(4, 3, {8, 8}, ArchMode::D2rl, true));
    Rng rng(77);
    net.init_params(rng);
    Mat X(4, 6);
    Rng xr(78);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = xr.normal();
    nn::BatchTape tape;
    Mat Y = net.forward_batch(X, &tape);
    Mat dY = Mat::Ones(3, 6);
    Vec grad = Vec::Zero(net.param_count());
    net.backward_batch(tape, dY, &grad, false);
    return std::make_pair(Y, grad);
  };
  auto [y1, g1] = run();
  auto [y2, g2] = run();
  CHECK(std::memcmp(y1.data(), y2.data(), sizeof(double) * y1.size()) == 0);
  CHECK(std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) == 0);
}

TEST_CASE("d2rl shape law and parameter counting") {
  const int d = 5, h = 16;
  DenseNet net(arch(d, 2, {h, h, h, h}, ArchMode::D2rl, true));
  const auto& layers = net.layers();
  REQUIRE(layers.size() == 5);
  CHECK(layers[0].in == d);
  for (int l = 1; l < 4; ++l) CHECK(layers[l].in == h + d);
  CHECK(layers[4].in == h);  // output layer takes the last hidden alone
  // parameter count is a pure function of the architecture
  long expected = 0;
  for (const auto& ls : layers) {
    expected += static_cast<long>(ls.in) * ls.out + ls.out;
    if (ls.norm) expected += 2L * ls.out;
  }
  CHECK(net.param_count() == expected);
  DenseNet again(arch(d, 2, {h, h, h, h}, ArchMode::D2rl, true));
  CHECK(again.param_count() == expected);
}

TEST_CASE("contract violations") {
  DenseNet net(arch(3, 2, {4}, ArchMode::Plain, false));
  Rng rng(4);
  net.init_params(rng);
  SUBCASE("dimension mismatch on forward") {
    CHECK_THROWS_AS(net.forward(Vec::Ones(2)), ContractViolation);
  }
  SUBCASE("non-finite input") {
    Vec x(3);
    x << 1.0, std::numeric_limits<double>::infinity(), 0.0;
    CHECK_THROWS_AS(net.forward(x), ContractViolation);
  }
  SUBCASE("stale tape after a parameter update") {
    nn::BatchTape tape;
    net.forward(Vec::Ones(3), &tape);
    nn::AdamState opt(net.param_count());
    nn::adam_step(net, Vec::Ones(net.param_count()), opt);
    Vec grad = Vec::Zero(net.param_count());
    Vec dy = Vec::Ones(2);
    CHECK_THROWS_AS(net.backward(tape, dy, grad), ContractViolation);
  }
  SUBCASE("tape consumed by a single-sample backward") {
    nn::BatchTape tape;
    net.forward(Vec::Ones(3), &tape);
    Vec grad = Vec::Zero(net.param_count());
    Vec dy = Vec::Ones(2);
    net.backward(tape, dy, grad);
    CHECK_THROWS_AS(net.backward(tape, dy, grad), ContractViolation);
  }
}

TEST_SUITE_END();
