#include "momo/env.hpp"

#include <cmath>

namespace momo {

PointMassEnv::PointMassEnv(int episode_cap) : goal_(2), cap_(episode_cap) {
  require(episode_cap >= 1, "PointMassEnv: episode cap must be >= 1");
  goal_ << 0.7, 0.7;
}

Vec PointMassEnv::reset(Rng& rng) {
  t_ = 0;
  Vec s(2);
  do {
    s << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
  } while ((s - goal_).norm() < 0.3);
  return s;
}

PointMassEnv::Step PointMassEnv::step(const Vec& s, const Vec& a) {
  require(s.size() == 2 && a.size() == 2, "PointMassEnv::step: bad shapes");
  const double tol = 1e-9;
  require(a[0] >= -1.0 - tol && a[0] <= 1.0 + tol && a[1] >= -1.0 - tol &&
              a[1] <= 1.0 + tol,
          "PointMassEnv::step: action outside bounds");
  Step out;
  out.s2 = (s + kDt * a).cwiseMax(-1.0).cwiseMin(1.0);
  const double dist = (out.s2 - goal_).norm();
  const bool at_goal = dist < kGoalRadius;
  out.r = -kStepPenalty * dist + (at_goal ? kGoalReward : 0.0);
  ++t_;
  out.terminal = at_goal || t_ >= cap_;
  return out;
}

Vec scripted_action(const Vec& s, const Vec& goal) {
  Vec a = 4.0 * (goal - s);
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

Vec didactic_state(int index) {
  require(index == 0 || index == 1, "didactic_state: index must be 0 or 1");
  Vec s = Vec::Zero(2);
  s[index] = 1.0;
  return s;
}

std::vector<Vec> didactic_modes(int state_index) {
  require(state_index == 0 || state_index == 1,
          "didactic_modes: index must be 0 or 1");
  std::vector<Vec> modes;
  for (int k = state_index; k < 8; k += 2) {
    const double ang = k * 3.14159265358979323846 / 4.0;
    Vec m(2);
    m << std::cos(ang), std::sin(ang);
    modes.push_back(m);
  }
  return modes;
}

OfflineDataset make_didactic_dataset(std::uint64_t seed) {
  OfflineDataset ds(2, 2, Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
  Rng rng(derive_seed(seed, 0xD1DAC71C));
  constexpr int kSamplesPerMode = 16;  // 4 modes * 16 = 64 per state
  for (int si = 0; si < 2; ++si) {
    const Vec s = didactic_state(si);
    for (const Vec& mode : didactic_modes(si)) {
      for (int k = 0; k < kSamplesPerMode; ++k) {
        Vec a(2);
        a << mode[0] + 0.01 * rng.normal(), mode[1] + 0.01 * rng.normal();
        a = a.cwiseMax(-1.0).cwiseMin(1.0);
        ds.add({s, a, 0.0, s, true});
      }
    }
  }
  ds.meta().generator = "didactic";
  ds.meta().seed = seed;
  ds.meta().episodes = ds.size();
  ds.meta().mean_return = 0.0;
  return ds;
}

DataQuality parse_quality(const std::string& name) {
  if (name == "scripted") return DataQuality::Scripted;
  if (name == "mixed") return DataQuality::Mixed;
  if (name == "random") return DataQuality::Random;
  throw ContractViolation("unknown data quality '" + name + "'");
}

std::string quality_name(DataQuality q) {
  switch (q) {
    case DataQuality::Scripted: return "scripted";
    case DataQuality::Mixed: return "mixed";
    case DataQuality::Random: return "random";
  }
  return "?";
}

OfflineDataset make_pointmass_dataset(DataQuality quality, long size,
                                      std::uint64_t seed) {
  require(size >= 1, "make_pointmass_dataset: size must be >= 1");
  PointMassEnv env;
  OfflineDataset ds(env.state_dim(), env.action_dim(), env.action_low(),
                    env.action_high());
  Rng rng(derive_seed(seed, 0x9017BA55));

  double return_sum = 0.0, scripted_return_sum = 0.0;
  long episodes = 0, scripted_episodes = 0;
  long episode_index = 0;
  while (ds.size() < size) {
    const bool scripted =
        quality == DataQuality::Scripted ||
        (quality == DataQuality::Mixed && episode_index % 2 == 0);
    ++episode_index;
    Vec s = env.reset(rng);
    double ep_return = 0.0;
    bool complete = false;
    while (true) {
      Vec a;
      if (scripted) {
        a = scripted_action(s, env.goal());
      } else {
        a.resize(2);
        a << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
      }
      auto st = env.step(s, a);
      ds.add({s, a, st.r, st.s2, st.terminal});
      ep_return += st.r;
      s = st.s2;
      if (st.terminal) {
        complete = true;
        break;
      }
      if (ds.size() >= size) break;  // episode cut by the size cap
    }
    if (complete && ds.size() <= size) {
      return_sum += ep_return;
      ++episodes;
      if (scripted) {
        scripted_return_sum += ep_return;
        ++scripted_episodes;
      }
    }
  }
  // honor the size exactly: the loop above never overshoots because the
  // episode breaks as soon as the cap is reached
  ds.meta().generator = "pointmass-" + quality_name(quality);
  ds.meta().seed = seed;
  ds.meta().episodes = episodes;
  if (episodes > 0) ds.meta().mean_return = return_sum / episodes;
  if (scripted_episodes > 0)
    ds.meta().scripted_mean_return = scripted_return_sum / scripted_episodes;
  return ds;
}

}  // namespace momo
