#include "momo/rollout.hpp"

namespace momo {

bool trunc(double prob, double eps_trunc) {
  require(prob >= 0.0 && prob <= 1.0, "trunc: probability outside [0, 1]");
  require(eps_trunc >= 0.0 && eps_trunc <= 1.0,
          "trunc: threshold outside [0, 1]");
  return prob < eps_trunc;
}

void tracker_step(RolloutTracker& tracker, double m_value, double eps_trunc) {
  require(!tracker.truncated, "tracker_step: tracker already truncated");
  require(m_value >= 0.0 && m_value <= 1.0,
          "tracker_step: certainty outside [0, 1]");
  tracker.prob *= m_value;
  tracker.t += 1;
  tracker.truncated = trunc(tracker.prob, eps_trunc);
}

SyntheticBuffer::SyntheticBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity_ > 0, "SyntheticBuffer: capacity must be positive");
  store_.reserve(capacity_);
}

void SyntheticBuffer::push(Transition t) {
  if (store_.size() < capacity_) {
    store_.push_back(std::move(t));
  } else {
    store_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  ++inserted_;
}

const Transition& SyntheticBuffer::at(std::size_t i) const {
  require(i < store_.size(), "SyntheticBuffer::at: index out of range");
  return store_[(head_ + i) % store_.size()];
}

const Transition& SyntheticBuffer::sample(Rng& rng) const {
  require(!store_.empty(), "SyntheticBuffer::sample: buffer is empty");
  return store_[rng.uniform_int(static_cast<int>(store_.size()))];
}

RolloutStats generate_rollouts(
    const PolicyFn& policy, const MorseNetwork& morse,
    const DynamicsModel& dynamics, const OfflineDataset& data,
    const RolloutConfig& cfg, std::uint64_t seed, SyntheticBuffer& buffer,
    Exec exec, const std::function<Vec(Rng&)>& initial_state_sampler) {
  require(cfg.horizon >= 1, "generate_rollouts: horizon must be >= 1");
  require(cfg.count >= 1, "generate_rollouts: count must be >= 1");
  require(cfg.eps_trunc >= 0.0 && cfg.eps_trunc <= 1.0,
          "generate_rollouts: eps_trunc outside [0, 1]");
  require(!data.empty() || cfg.start == RolloutStart::InitialStateDistribution,
          "generate_rollouts: dataset start states need a non-empty dataset");
  if (cfg.start == RolloutStart::InitialStateDistribution)
    require(static_cast<bool>(initial_state_sampler),
            "generate_rollouts: initial-state sampler missing");

  std::vector<std::vector<Transition>> collected(cfg.count);
  for_each_block(cfg.count, exec, [&](int k) {
    Rng rng(derive_seed(seed, 0x5011007, static_cast<std::uint64_t>(k)));
    Vec s;
    if (cfg.start == RolloutStart::DatasetStates) {
      s = data[rng.uniform_int(static_cast<int>(data.size()))].s;
    } else {
      s = initial_state_sampler(rng);
    }
    RolloutTracker tracker;
    auto& out = collected[k];
    for (int t = 0; t < cfg.horizon; ++t) {
      const Vec a = policy(s, rng);
      const double m = certainty(morse, s, a);
      tracker_step(tracker, m, cfg.eps_trunc);
      if (tracker.truncated) break;  // drop the truncating transition
      const auto step = dynamics_step(dynamics, s, a, rng);
      out.push_back({s, a, step.r, step.s2, false});
      s = step.s2;
    }
  });

  RolloutStats stats;
  stats.rollouts = cfg.count;
  for (auto& rollout : collected) {
    stats.transitions += static_cast<long>(rollout.size());
    for (auto& t : rollout) buffer.push(std::move(t));
  }
  stats.mean_length =
      static_cast<double>(stats.transitions) / static_cast<double>(cfg.count);
  return stats;
}

}  // namespace momo
