#include <doctest.h>

#include <cmath>

#include "momo/env.hpp"
#include "momo/rollout.hpp"

using namespace momo;

namespace {

struct RolloutRig {
  OfflineDataset data;
  MorseNetwork morse;
  DynamicsModel dynamics;
  PolicyFn policy;

  RolloutRig()
      : data(make_pointmass_dataset(DataQuality::Mixed, 300, 21)) {
    MorseTrainConfig mc;
    mc.hidden = 16;
    mc.hidden_layers = 2;
    mc.seed = 4;
    morse = make_morse_network(mc, 2, 2);
    // spread the embedding so certainties vary well below 1
    Rng prng(6);
    for (long i = 0; i < morse.embed.param_count(); ++i)
      morse.embed.params()[i] += 0.05 * prng.normal();
    morse.embed.mark_params_changed();
    DynamicsTrainConfig dc;
    dc.hidden = 16;
    dc.hidden_layers = 2;
    dc.seed = 5;
    dynamics = make_dynamics_model(dc, 2, 2);
    policy = [](const Vec& s, Rng& rng) {
      Vec a(2);
      a << 0.4 * std::tanh(s[0]) + 0.1 * rng.normal(),
          -0.4 * std::tanh(s[1]) + 0.1 * rng.normal();
      return a.cwiseMax(-1.0).cwiseMin(1.0);
    };
  }
};

}  // namespace

TEST_SUITE_BEGIN("rollout");

TEST_CASE("trunc boundary behavior") {
  CHECK(trunc(0.94, 0.95));           // strictly below: truncate
  CHECK_FALSE(trunc(0.95, 0.95));     // equality: keep going
  CHECK_FALSE(trunc(1.0, 1.0));
  CHECK(trunc(0.9999999, 1.0));
  for (double p : {0.0, 0.3, 0.9, 1.0}) CHECK_FALSE(trunc(p, 0.0));
  CHECK_THROWS_AS(trunc(1.1, 0.5), ContractViolation);
  CHECK_THROWS_AS(trunc(0.5, -0.1), ContractViolation);
}

TEST_CASE("tracker accumulates the product of factors") {
  RolloutTracker t;
  CHECK(t.prob == 1.0);
  tracker_step(t, 1.0, 0.0);
  tracker_step(t, 0.9, 0.0);
  tracker_step(t, 0.8, 0.0);
  CHECK(t.prob == doctest::Approx(0.72).epsilon(1e-12));
  CHECK(t.t == 3);
  CHECK_FALSE(t.truncated);
}

TEST_CASE("tracker product law over many random factors") {
  Rng rng(17);
  RolloutTracker t;
  double expected = 1.0;
  for (int i = 0; i < 100; ++i) {
    const double m = 0.9 + 0.1 * rng.uniform();
    expected *= m;
    tracker_step(t, m, 0.0);
  }
  CHECK(std::abs(t.prob - expected) <= 1e-12);
}

TEST_CASE("eps_trunc = 1 truncates on the first imperfect factor") {
  RolloutTracker t;
  tracker_step(t, 0.999, 1.0);
  CHECK(t.truncated);
  CHECK(t.t == 1);
}

TEST_CASE("0.999 factors against eps 0.95 truncate at step 52") {
  // smallest t with 0.999^t < 0.95
  RolloutTracker t;
  while (!t.truncated) tracker_step(t, 0.999, 0.95);
  CHECK(t.t == 52);
}

TEST_CASE("stepping a truncated tracker is a contract violation") {
  RolloutTracker t;
  tracker_step(t, 0.5, 0.95);
  REQUIRE(t.truncated);
  CHECK_THROWS_AS(tracker_step(t, 0.9, 0.95), ContractViolation);
}

TEST_CASE("tracker rejects certainties outside [0, 1]") {
  RolloutTracker t;
  CHECK_THROWS_AS(tracker_step(t, 1.5, 0.5), ContractViolation);
  CHECK_THROWS_AS(tracker_step(t, -0.1, 0.5), ContractViolation);
}

TEST_CASE("synthetic buffer is a bounded fifo") {
  SyntheticBuffer buf(10);
  auto tr = [](double tag) {
    return Transition{Vec::Zero(2), Vec::Zero(2), tag, Vec::Zero(2), false};
  };
  for (int i = 0; i < 15; ++i) buf.push(tr(i));
  CHECK(buf.size() == 10);
  CHECK(buf.total_inserted() == 15);
  // first five insertions are gone
  for (int i = 0; i < 10; ++i) CHECK(buf.at(i).r == doctest::Approx(5.0 + i));
  // sampling only returns surviving entries
  Rng rng(3);
  for (int i = 0; i < 100; ++i) CHECK(buf.sample(rng).r >= 5.0);
}

TEST_CASE("rollout generation") {
  RolloutRig rig;
  RolloutConfig rc;
  rc.horizon = 40;
  rc.count = 25;

  SUBCASE("eps = 1 with an imperfect morse net appends nothing") {
    rc.eps_trunc = 1.0;
    SyntheticBuffer buf(1000);
    auto stats = generate_rollouts(rig.policy, rig.morse, rig.dynamics,
                                   rig.data, rc, 13, buf);
    CHECK(buf.size() == 0);
    CHECK(stats.mean_length == 0.0);
  }

  SUBCASE("eps = 0 never truncates: every rollout runs the full horizon") {
    rc.eps_trunc = 0.0;
    SyntheticBuffer buf(10000);
    auto stats = generate_rollouts(rig.policy, rig.morse, rig.dynamics,
                                   rig.data, rc, 13, buf);
    CHECK(stats.transitions == static_cast<long>(rc.count) * rc.horizon);
    CHECK(stats.mean_length == doctest::Approx(rc.horizon));
  }

  SUBCASE("no stored transition is ever terminal") {
    rc.eps_trunc = 0.5;
    SyntheticBuffer buf(10000);
    generate_rollouts(rig.policy, rig.morse, rig.dynamics, rig.data, rc, 13,
                      buf);
    for (std::size_t i = 0; i < buf.size(); ++i)
      CHECK_FALSE(buf.at(i).terminal);
  }

  SUBCASE("per-rollout truncation step is monotone in eps") {
    // same seed: the rollout prefix is identical across eps values, so a
    // larger threshold can only cut earlier (exact, not statistical)
    rc.count = 1;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      long prev = -1;
      for (double eps : {0.98, 0.9, 0.7, 0.3}) {  // decreasing
        rc.eps_trunc = eps;
        SyntheticBuffer buf(1000);
        auto stats = generate_rollouts(rig.policy, rig.morse, rig.dynamics,
                                       rig.data, rc, seed, buf);
        if (prev >= 0) CHECK(stats.transitions >= prev);
        prev = stats.transitions;
      }
    }
  }

  SUBCASE("mean length is monotone in eps over the paper grid") {
    rc.count = 50;
    double prev = -1.0;
    for (double eps : {0.98, 0.95, 0.90, 0.85, 0.80}) {
      rc.eps_trunc = eps;
      SyntheticBuffer buf(10000);
      auto stats = generate_rollouts(rig.policy, rig.morse, rig.dynamics,
                                     rig.data, rc, 99, buf);
      if (prev >= 0) CHECK(stats.mean_length >= prev);
      prev = stats.mean_length;
    }
  }

  SUBCASE("identical results under serial and openmp execution") {
    rc.eps_trunc = 0.5;
    SyntheticBuffer a(10000), b(10000);
    generate_rollouts(rig.policy, rig.morse, rig.dynamics, rig.data, rc, 13,
                      a, Exec::Serial);
    generate_rollouts(rig.policy, rig.morse, rig.dynamics, rig.data, rc, 13,
                      b, Exec::OpenMP);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.at(i).s == b.at(i).s);
      CHECK(a.at(i).a == b.at(i).a);
      CHECK(a.at(i).r == b.at(i).r);
      CHECK(a.at(i).s2 == b.at(i).s2);
    }
  }
}

TEST_SUITE_END();
