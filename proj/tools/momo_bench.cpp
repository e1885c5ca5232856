// Benchmark comparing the serial reference kernels against the OpenMP
// paths: batched Morse loss gradients, critic-style batched
// forward/backward, density-grid evaluation and rollout generation.
//
//   momo_bench [--quick]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "momo/agent.hpp"
#include "momo/env.hpp"
#include "momo/morse.hpp"
#include "momo/rollout.hpp"

using namespace momo;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms) {
  std::printf("%-28s serial %9.3f ms   openmp %9.3f ms   speedup %.2fx\n",
              name, serial_ms, omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int reps = quick ? 2 : 10;
  const int batch = quick ? 128 : 512;

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (no OpenMP)\n");
#endif

  OfflineDataset data = make_pointmass_dataset(DataQuality::Mixed,
                                               quick ? 2000 : 10000, 7);

  MorseTrainConfig mcfg;
  mcfg.hidden = quick ? 64 : 256;
  mcfg.hidden_layers = quick ? 2 : 4;
  mcfg.seed = 7;
  MorseNetwork morse =
      make_morse_network(mcfg, data.state_dim(), data.action_dim());

  Rng rng(123);
  const int in = data.state_dim() + data.action_dim();
  Mat SAp(in, batch), SAn(in, batch);
  for (int i = 0; i < batch; ++i) {
    const auto& t = data[rng.uniform_int(static_cast<int>(data.size()))];
    SAp.col(i).head(2) = t.s;
    SAp.col(i).tail(2) = t.a;
    SAn.col(i).head(2) = t.s;
    SAn.col(i)[2] = rng.uniform(-1.2, 1.2);
    SAn.col(i)[3] = rng.uniform(-1.2, 1.2);
  }
  Vec grad(morse.embed.param_count());
  auto morse_step = [&](Exec exec) {
    grad.setZero();
    morse_loss(morse, SAp, SAn, 1.0, 1.0, &grad, exec);
  };
  report("morse loss + grad",
         time_ms([&] { morse_step(Exec::Serial); }, reps),
         time_ms([&] { morse_step(Exec::OpenMP); }, reps));

  AgentConfig acfg;
  acfg.hidden = quick ? 64 : 256;
  acfg.batch = batch;
  acfg.seed = 7;
  Td3Agent agent(acfg, data.state_dim(), data.action_dim(), data.action_low(),
                 data.action_high(), 7);
  TransitionBatch tb;
  tb.S.resize(2, batch);
  tb.A.resize(2, batch);
  tb.S2.resize(2, batch);
  tb.R.resize(batch);
  tb.TERM.resize(batch);
  for (int i = 0; i < batch; ++i) {
    const auto& t = data[rng.uniform_int(static_cast<int>(data.size()))];
    tb.S.col(i) = t.s;
    tb.A.col(i) = t.a;
    tb.S2.col(i) = t.s2;
    tb.R[i] = t.r;
    tb.TERM[i] = t.terminal ? 1.0 : 0.0;
  }
  auto critic_step = [&](Exec exec) {
    Rng nrng(99);
    agent.critic_update(morse, tb, nrng, exec);
  };
  report("critic update",
         time_ms([&] { critic_step(Exec::Serial); }, reps),
         time_ms([&] { critic_step(Exec::OpenMP); }, reps));

  auto actor_step = [&](Exec exec) { agent.actor_update(morse, tb.S, exec); };
  report("actor update",
         time_ms([&] { actor_step(Exec::Serial); }, reps),
         time_ms([&] { actor_step(Exec::OpenMP); }, reps));

  GridSpec grid;
  if (quick) grid = {30, 31, -1.8, 1.8};
  const Vec s0 = data[0].s;
  report("density grid",
         time_ms([&] { density_grid(morse, s0, grid, Exec::Serial); }, reps),
         time_ms([&] { density_grid(morse, s0, grid, Exec::OpenMP); }, reps));

  DynamicsTrainConfig dcfg;
  dcfg.hidden = quick ? 64 : 256;
  dcfg.hidden_layers = quick ? 2 : 5;
  dcfg.seed = 7;
  DynamicsModel dyn =
      make_dynamics_model(dcfg, data.state_dim(), data.action_dim());
  PolicyFn policy = [&](const Vec& s, Rng& prng) {
    return agent.select_action(s, true, prng);
  };
  RolloutConfig rc;
  rc.count = quick ? 10 : 50;
  rc.horizon = quick ? 25 : 100;
  rc.eps_trunc = 0.0;  // full-length rollouts: worst case
  auto rollouts = [&](Exec exec) {
    SyntheticBuffer buf(100000);
    generate_rollouts(policy, morse, dyn, data, rc, 5, buf, exec);
  };
  report("rollout generation",
         time_ms([&] { rollouts(Exec::Serial); }, reps),
         time_ms([&] { rollouts(Exec::OpenMP); }, reps));

  return 0;
}
