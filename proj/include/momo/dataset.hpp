#pragma once

#include <string>
#include <vector>

#include "momo/nn.hpp"

namespace momo {

/// One (s, a, r, s', terminal) tuple.
struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s2;
  bool terminal = false;
};

struct DatasetMeta {
  std::string generator;  // "didactic", "pointmass-scripted", ...
  std::uint64_t seed = 0;
  long episodes = 0;
  double mean_return = std::numeric_limits<double>::quiet_NaN();
  // Mean return of the scripted controller's complete episodes; the
  // behavior baseline for point-mass acceptance runs.
  double scripted_mean_return = std::numeric_limits<double>::quiet_NaN();
};

class OfflineDataset {
public:
  OfflineDataset() = default;
  OfflineDataset(int state_dim, int action_dim, Vec action_low,
                 Vec action_high);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const Vec& action_low() const { return action_low_; }
  const Vec& action_high() const { return action_high_; }
  DatasetMeta& meta() { return meta_; }
  const DatasetMeta& meta() const { return meta_; }

  long size() const { return static_cast<long>(transitions_.size()); }
  bool empty() const { return transitions_.empty(); }
  const Transition& operator[](long i) const { return transitions_[i]; }
  const std::vector<Transition>& transitions() const { return transitions_; }

  /// Validates dimensions, finiteness and action bounds.
  void add(Transition t);

  /// Per-dimension action min/max over the data, expanded by `expand` times
  /// the range on each side; the sampling box for uniform negative actions.
  std::pair<Vec, Vec> action_box(double expand = 0.1) const;

  bool operator==(const OfflineDataset& other) const;

private:
  int state_dim_ = 0;
  int action_dim_ = 0;
  Vec action_low_, action_high_;
  DatasetMeta meta_;
  std::vector<Transition> transitions_;
};

/// File format (.momo-data): one structured-text header line, then
/// fixed-width little-endian float64 records (s, a, r, s', terminal as 0/1).
void save_dataset(const std::string& path, const OfflineDataset& ds);
OfflineDataset load_dataset(const std::string& path);

}  // namespace momo
