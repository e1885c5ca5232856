#include <doctest.h>

#include <cmath>

#include "momo/env.hpp"
#include "momo/fd_check.hpp"
#include "momo/morse.hpp"

using namespace momo;

namespace {

// Hand-built Morse net whose embedding is x -> scale * x (state 1, action 1,
// e = 2), target 0: the distance field is scale * ||x|| exactly.
MorseNetwork linear_morse(double lambda, double scale) {
  MorseNetwork m;
  m.state_dim = 1;
  m.action_dim = 1;
  m.kernel.scale = lambda;
  m.target = Vec::Zero(2);
  nn::Architecture a;
  a.input_dim = 2;
  a.output_dim = 2;
  nn::DenseNet net(a);
  net.params().setZero();
  net.params()[0] = scale;  // W col-major 2x2
  net.params()[3] = scale;
  net.mark_params_changed();
  m.embed = std::move(net);
  return m;
}

MorseTrainConfig tiny_cfg(double lambda = 1.0) {
  MorseTrainConfig c;
  c.lambda = lambda;
  c.hidden = 16;
  c.hidden_layers = 2;
  c.batch = 32;
  c.steps = 0;
  c.seed = 5;
  return c;
}

void zero_final_layer(nn::DenseNet& net) {
  const std::string prefix =
      "layer" + std::to_string(net.layers().size() - 1) + ".";
  for (const auto& e : net.layout()) {
    if (e.name == prefix + "W" || e.name == prefix + "b") {
      for (long i = 0; i < e.count(); ++i) net.params()[e.offset + i] = 0.0;
    }
  }
  net.mark_params_changed();
}

}  // namespace

TEST_SUITE_BEGIN("morse");

TEST_CASE("rbf kernel") {
  MorseKernel k{1.0};
  Vec z(3), t(3);
  z << 1, 2, 3;
  SUBCASE("equal points have certainty one") {
    CHECK(kernel_eval(k, z, z) == 1.0);
  }
  SUBCASE("distance ln 2 gives one half") {
    t = z;
    t[0] += std::sqrt(std::log(2.0));
    CHECK(kernel_eval(k, z, t) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("strictly decreasing in lambda for distinct points") {
    t = z;
    t[1] += 0.7;
    double prev = 1.0;
    for (double lam : {0.1, 1.0, 2.0, 4.0}) {
      const double v = kernel_eval(MorseKernel{lam}, z, t);
      CHECK(v < prev);
      prev = v;
    }
    CHECK(kernel_eval(MorseKernel{4.0}, z, t) <=
          kernel_eval(MorseKernel{0.1}, z, t));
  }
  SUBCASE("length mismatch is a contract violation") {
    CHECK_THROWS_AS(kernel_eval(k, Vec::Ones(2), Vec::Ones(3)),
                    ContractViolation);
  }
}

TEST_CASE("certainty range and EBM consistency on random inputs") {
  MorseNetwork m = make_morse_network(tiny_cfg(), 2, 2);
  Rng rng(42);
  const int n = 100000;
  Mat SA(4, n);
  for (int i = 0; i < SA.size(); ++i) SA.data()[i] = 3.0 * rng.normal();
  RowVec logm = log_certainty_batch(m, SA);
  int bad = 0;
  for (int i = 0; i < n; ++i) {
    const double c = std::exp(logm[i]);
    if (!(logm[i] <= 0.0 && c >= 0.0 && c <= 1.0)) ++bad;
  }
  CHECK(bad == 0);
  // spot-check exp(log_certainty) == certainty through the scalar path
  for (int i = 0; i < 50; ++i) {
    Vec s = SA.col(i).head(2), a = SA.col(i).tail(2);
    const double c = certainty(m, s, a);
    if (c > 1e-12)
      CHECK(std::abs(std::exp(log_certainty(m, s, a)) - c) < 1e-9);
  }
}

TEST_CASE("zeroed final layer with zero target is certain everywhere") {
  MorseNetwork m = make_morse_network(tiny_cfg(), 2, 2);
  zero_final_layer(m.embed);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    Vec s(2), a(2);
    for (int d = 0; d < 2; ++d) {
      s[d] = rng.normal();
      a[d] = rng.normal();
    }
    CHECK(certainty(m, s, a) == 1.0);
    CHECK(log_certainty(m, s, a) == 0.0);
  }
}

TEST_CASE("log certainty analytic values") {
  MorseNetwork m = linear_morse(1.0, 1.0);
  // embedding equals the input; pick (s, a) with s^2 + a^2 = 3
  Vec s(1), a(1);
  s << std::sqrt(2.0);
  a << 1.0;
  CHECK(log_certainty(m, s, a) == doctest::Approx(-3.0).epsilon(1e-12));
  s << 0.0;
  a << 0.0;
  CHECK(log_certainty(m, s, a) == 0.0);
}

TEST_CASE("morse loss analytic two-sample case") {
  // identity embedding, lambda 1, no penalty: one positive at distance^2 = 1
  // and one negative at distance^2 = 1 give 1 + e^-1
  MorseNetwork m = linear_morse(1.0, 1.0);
  Mat pos(2, 1), neg(2, 1);
  pos << 1.0, 0.0;
  neg << 0.0, 1.0;
  auto terms = morse_loss(m, pos, neg, 0.0, 1.0, nullptr);
  CHECK(terms.total == doctest::Approx(1.0 + std::exp(-1.0)).epsilon(1e-12));
  CHECK(terms.penalty == 0.0);
}

TEST_CASE("morse loss at its optimum is dominated by the penalty term") {
  // slope-2 embedding: positives at the origin map onto the target, the
  // negatives map far away; main terms vanish, the hinge stays active
  MorseNetwork m = linear_morse(1.0, 2.0);
  Mat pos(2, 2), neg(2, 2);
  pos.setZero();
  neg << 10.0, -10.0, 10.0, 10.0;
  auto terms = morse_loss(m, pos, neg, 1.0, 1.0, nullptr);
  CHECK(terms.positive == 0.0);
  CHECK(terms.negative < 1e-12);
  // slope 2 against L = 1: hinge^2 = 1 at the two negative samples; the
  // positives sit at the distance-field kink where the subgradient is 0
  CHECK(terms.penalty == doctest::Approx(2.0 / 4.0));
  CHECK(terms.total == doctest::Approx(terms.penalty).epsilon(1e-9));
}

TEST_CASE("gradient penalty analytic values") {
  SUBCASE("constant embedding has zero penalty") {
    MorseNetwork m = make_morse_network(tiny_cfg(), 1, 1);
    m.embed.params().setZero();
    // nonzero bias on the output layer: constant embedding away from t
    const std::string bname =
        "layer" + std::to_string(m.embed.layers().size() - 1) + ".b";
    for (const auto& e : m.embed.layout())
      if (e.name == bname) m.embed.params()[e.offset] = 2.0;
    m.embed.mark_params_changed();
    Mat X(2, 3);
    X << 1, 2, 3, 4, 5, 6;
    CHECK(gradient_penalty(m, X, 1.0, nullptr) == 0.0);
  }
  SUBCASE("slope-3 distance field gives (3 - 1)^2 per sample") {
    MorseNetwork m = linear_morse(1.0, 3.0);
    Mat X(2, 1);
    X << 0.4, -0.3;
    CHECK(gradient_penalty(m, X, 1.0, nullptr) ==
          doctest::Approx(4.0).epsilon(1e-12));
    Mat X2(2, 3);
    X2 << 0.4, 1.0, -2.0, -0.3, 0.5, 0.1;
    CHECK(gradient_penalty(m, X2, 1.0, nullptr) ==
          doctest::Approx(12.0).epsilon(1e-12));
  }
}

TEST_CASE("gradient penalty gradient matches finite differences") {
  for (int seed = 0; seed < 5; ++seed) {
    MorseTrainConfig cfg = tiny_cfg();
    cfg.hidden = 8;
    cfg.seed = 200 + seed;
    MorseNetwork m = make_morse_network(cfg, 2, 2);
    // push away from the tiny final-layer init so hinges activate
    Rng prng(300 + seed);
    for (long i = 0; i < m.embed.param_count(); ++i)
      m.embed.params()[i] += 0.3 * prng.normal();
    m.embed.mark_params_changed();
    Mat X(4, 4);
    Rng rng(400 + seed);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    Vec grad = Vec::Zero(m.embed.param_count());
    const double pen = gradient_penalty(m, X, 0.05, &grad);
    REQUIRE(pen > 0.0);  // hinge must be active for the check to mean much
    auto rep = nn::finite_difference_check(
        m.embed, [&] { return gradient_penalty(m, X, 0.05, nullptr); }, grad,
        1e-3);
    INFO("seed=", seed, " worst=", rep.worst_param, " err=", rep.max_rel_err);
    CHECK(rep.pass);
  }
}

TEST_CASE("full morse loss gradient matches finite differences") {
  for (int seed = 0; seed < 5; ++seed) {
    MorseTrainConfig cfg = tiny_cfg();
    cfg.hidden = 8;
    cfg.seed = 500 + seed;
    MorseNetwork m = make_morse_network(cfg, 2, 2);
    Rng prng(600 + seed);
    for (long i = 0; i < m.embed.param_count(); ++i)
      m.embed.params()[i] += 0.2 * prng.normal();
    m.embed.mark_params_changed();
    Mat pos(4, 4), neg(4, 4);
    Rng rng(700 + seed);
    for (int i = 0; i < pos.size(); ++i) pos.data()[i] = rng.normal();
    for (int i = 0; i < neg.size(); ++i) neg.data()[i] = rng.normal();
    Vec grad = Vec::Zero(m.embed.param_count());
    morse_loss(m, pos, neg, 1.0, 0.05, &grad);
    auto rep = nn::finite_difference_check(
        m.embed,
        [&] { return morse_loss(m, pos, neg, 1.0, 0.05, nullptr).total; },
        grad, 1e-3);
    INFO("seed=", seed, " worst=", rep.worst_param, " err=", rep.max_rel_err);
    CHECK(rep.pass);
  }
}

TEST_CASE("train_morse with zero steps returns the fresh network") {
  OfflineDataset ds = make_didactic_dataset(3);
  MorseTrainConfig cfg = tiny_cfg();
  cfg.steps = 0;
  MorseNetwork trained = train_morse(cfg, ds);
  MorseNetwork fresh = make_morse_network(cfg, 2, 2);
  CHECK(trained.embed.params() == fresh.embed.params());
}

TEST_CASE("train_morse rejects an empty dataset") {
  OfflineDataset empty(2, 2, Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
  CHECK_THROWS_AS(train_morse(tiny_cfg(), empty), ContractViolation);
}

TEST_CASE("morse loss rejects an empty batch") {
  MorseNetwork m = linear_morse(1.0, 1.0);
  Mat empty(2, 0);
  CHECK_THROWS_AS(morse_loss(m, empty, empty, 1.0, 1.0, nullptr),
                  ContractViolation);
}

TEST_CASE("density grid") {
  MorseNetwork m = make_morse_network(tiny_cfg(), 2, 2);
  SUBCASE("3x3 grid yields 9 row-major rows in [0, 1]") {
    auto rows = density_grid(m, didactic_state(0), {3, 3, -1.8, 1.8});
    REQUIRE(rows.size() == 9);
    for (const auto& r : rows) {
      CHECK(r.certainty >= 0.0);
      CHECK(r.certainty <= 1.0);
    }
    CHECK(rows[0].a1 == doctest::Approx(-1.8));
    CHECK(rows[0].a2 == doctest::Approx(-1.8));
    CHECK(rows[1].a1 == doctest::Approx(-1.8));  // a2 varies fastest
    CHECK(rows[1].a2 == doctest::Approx(0.0));
    CHECK(rows[8].a1 == doctest::Approx(1.8));
    CHECK(rows[8].a2 == doctest::Approx(1.8));
  }
  SUBCASE("non-2D action space is unsupported") {
    MorseNetwork m3 = make_morse_network(tiny_cfg(), 2, 3);
    CHECK_THROWS_AS(density_grid(m3, didactic_state(0), {3, 3, -1.8, 1.8}),
                    UnsupportedOperation);
  }
}

TEST_CASE("mode property: training atoms beat perturbed atoms" *
          doctest::timeout(300)) {
  // duplicated point-mass atoms; after a short training run, certainty at an
  // atom should dominate certainty at the atom pushed by action noise
  Rng gen(77);
  OfflineDataset ds(2, 2, Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
  std::vector<Vec> ss, as;
  for (int i = 0; i < 16; ++i) {
    Vec s(2), a(2);
    for (int d = 0; d < 2; ++d) {
      s[d] = gen.uniform(-1.0, 1.0);
      a[d] = gen.uniform(-0.9, 0.9);
    }
    ss.push_back(s);
    as.push_back(a);
    for (int k = 0; k < 8; ++k) ds.add({s, a, 0.0, s, true});
  }
  MorseTrainConfig cfg;
  cfg.lambda = 1.0;
  cfg.hidden = 32;
  cfg.hidden_layers = 2;
  cfg.batch = 128;
  cfg.steps = 1500;
  cfg.seed = 9;
  MorseNetwork m = train_morse(cfg, ds);

  Rng rng(88);
  int wins = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const int i = rng.uniform_int(16);
    Vec noise(2);
    noise << rng.normal(), rng.normal();
    noise *= 0.5 / std::max(noise.norm(), 1e-9);  // magnitude 0.5
    const Vec pert = as[i] + noise;
    if (certainty(m, ss[i], as[i]) >= certainty(m, ss[i], pert)) ++wins;
  }
  CHECK(wins >= 950);
}

TEST_SUITE_END();
