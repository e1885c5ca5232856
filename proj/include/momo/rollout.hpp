#pragma once

#include <functional>

#include "momo/dataset.hpp"
#include "momo/dynamics.hpp"
#include "momo/morse.hpp"
#include "momo/parallel.hpp"

namespace momo {

/// True iff the running trajectory probability has dropped strictly below
/// the threshold.
bool trunc(double prob, double eps_trunc);

/// Running Morse-probability of a synthetic trajectory:
/// P(tau_0:t) = prod_i M(s_i, a_i), starting at 1. Non-increasing in t.
struct RolloutTracker {
  double prob = 1.0;
  int t = 0;
  bool truncated = false;
};

/// Multiplies in one certainty factor, advances the step index and sets the
/// truncated flag per trunc(). Stepping an already-truncated tracker is a
/// contract violation.
void tracker_step(RolloutTracker& tracker, double m_value, double eps_trunc);

/// Bounded FIFO store of synthetic transitions with uniform sampling over
/// the current contents.
class SyntheticBuffer {
public:
  explicit SyntheticBuffer(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return store_.size(); }
  std::size_t total_inserted() const { return inserted_; }
  bool empty() const { return store_.empty(); }

  void push(Transition t);
  /// i-th oldest surviving transition.
  const Transition& at(std::size_t i) const;
  const Transition& sample(Rng& rng) const;

private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // index of the oldest element
  std::size_t inserted_ = 0;
  std::vector<Transition> store_;
};

/// Policy hook: action for a state, drawing any noise from the given rng.
using PolicyFn = std::function<Vec(const Vec& s, Rng& rng)>;

enum class RolloutStart { DatasetStates, InitialStateDistribution };

struct RolloutConfig {
  int horizon = 100;
  double eps_trunc = 0.95;
  int count = 50;
  RolloutStart start = RolloutStart::DatasetStates;
};

struct RolloutStats {
  int rollouts = 0;
  long transitions = 0;
  double mean_length = 0.0;
};

/// Generates truncated synthetic rollouts and appends their transitions to
/// the buffer. Start states are drawn uniformly from dataset states (or
/// from the initial-state sampler when configured). At each step the
/// tracker multiplies in M(s_t, a_t); on truncation the rollout stops
/// without storing the truncating transition and without marking a
/// terminal. Per-rollout rng streams are derived from the seed, so results
/// do not depend on the execution policy or thread count.
RolloutStats generate_rollouts(
    const PolicyFn& policy, const MorseNetwork& morse,
    const DynamicsModel& dynamics, const OfflineDataset& data,
    const RolloutConfig& cfg, std::uint64_t seed, SyntheticBuffer& buffer,
    Exec exec = default_exec(),
    const std::function<Vec(Rng&)>& initial_state_sampler = {});

}  // namespace momo
