#pragma once

#include "momo/dataset.hpp"
#include "momo/rng.hpp"

namespace momo {

/// Deterministic 2D point-mass control task: state is a position in
/// [-1, 1]^2, actions are velocity commands in [-1, 1]^2, transition is
/// s' = clip(s + 0.1 a, arena). Reward is -0.1 * distance-to-goal with a
/// +10 bonus inside the goal radius; episodes end at the goal or at the
/// step cap.
class PointMassEnv {
public:
  static constexpr double kDt = 0.1;
  static constexpr double kGoalRadius = 0.1;
  static constexpr double kGoalReward = 10.0;
  static constexpr double kStepPenalty = 0.1;

  explicit PointMassEnv(int episode_cap = 60);

  int state_dim() const { return 2; }
  int action_dim() const { return 2; }
  Vec action_low() const { return Vec::Constant(2, -1.0); }
  Vec action_high() const { return Vec::Constant(2, 1.0); }
  const Vec& goal() const { return goal_; }
  int episode_cap() const { return cap_; }

  /// Uniform start over the arena, re-drawn until it is at least 0.3 from
  /// the goal. Resets the step counter.
  Vec reset(Rng& rng);

  struct Step {
    Vec s2;
    double r = 0.0;
    bool terminal = false;
  };

  /// Deterministic in (s, a); the step counter only feeds the episode cap.
  Step step(const Vec& s, const Vec& a);

  int steps_taken() const { return t_; }

private:
  Vec goal_;
  int cap_;
  int t_ = 0;
};

/// Spec-shaped free function over an env instance.
inline PointMassEnv::Step env_step(PointMassEnv& env, const Vec& s,
                                   const Vec& a) {
  return env.step(s, a);
}

/// Proportional controller driving toward the goal, saturated to the
/// action box.
Vec scripted_action(const Vec& s, const Vec& goal);

/// Figure-style didactic bandit: two one-hot states, eight unit-circle
/// action modes at angles k*pi/4 assigned alternately to the states, 64
/// action samples per state at std 0.01, clipped to [-1, 1]^2. Rewards are
/// zero and every transition is terminal.
OfflineDataset make_didactic_dataset(std::uint64_t seed);

/// Canonical didactic state by index (0 or 1).
Vec didactic_state(int index);
/// The four action modes assigned to a didactic state.
std::vector<Vec> didactic_modes(int state_index);

enum class DataQuality { Scripted, Mixed, Random };

DataQuality parse_quality(const std::string& name);
std::string quality_name(DataQuality q);

/// Rolls episodes in PointMassEnv: scripted controller, a 50/50
/// per-episode alternation with a uniform-random policy, or pure random.
/// Returns exactly `size` transitions; per-episode returns (complete
/// episodes only) feed the metadata return statistics.
OfflineDataset make_pointmass_dataset(DataQuality quality, long size,
                                      std::uint64_t seed);

}  // namespace momo
