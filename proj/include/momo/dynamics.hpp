#pragma once

#include <functional>

#include "momo/adam.hpp"
#include "momo/dataset.hpp"
#include "momo/parallel.hpp"
#include "momo/rng.hpp"

namespace momo {

/// Single diagonal-Gaussian dynamics model predicting the next-state delta
/// and the reward: body(s ++ a) -> [mean dS | mean r | logstd dS | logstd r].
/// Raw log-stds pass through a smooth two-sided clamp so emitted values
/// stay inside (logstd_low, logstd_high).
struct DynamicsModel {
  nn::DenseNet body;
  double logstd_low = -10.0;
  double logstd_high = 2.0;
  int state_dim = 0;
  int action_dim = 0;

  struct Prediction {
    Vec mean;    // state_dim + 1: delta then reward
    Vec logstd;  // state_dim + 1, clamped
  };
  Prediction predict(const Vec& s, const Vec& a) const;
};

/// Smooth two-sided clamp used for the log-stds; derivative via *dout.
double soft_clamp(double x, double lo, double hi, double* dout = nullptr);

struct DynamicsStep {
  Vec s2;
  double r = 0.0;
};

/// Samples (s', r) from the predicted Gaussian; deterministic mode takes
/// the mean. Draw order is fixed (state dims then reward), so results are
/// a pure function of the rng state.
DynamicsStep dynamics_step(const DynamicsModel& model, const Vec& s,
                           const Vec& a, Rng& rng,
                           bool deterministic = false);

/// Mean negative log-likelihood of (s' - s, r) under the model's diagonal
/// Gaussian over the batch columns. Accumulates parameter gradients into
/// *grad when non-null. SA stacks [s; a]; target stacks [s' - s; r].
double dynamics_nll(const DynamicsModel& model, const Mat& SA,
                    const Mat& target, Vec* grad, Exec exec = default_exec());

struct DynamicsTrainConfig {
  int batch = 512;
  long steps = 100000;
  double lr = 3e-4;
  double validation_fraction = 0.1;
  int hidden = 256;
  int hidden_layers = 5;
  long log_every = 1000;
  std::uint64_t seed = 0;
};

using DynamicsLogFn = std::function<void(long, double, double)>;  // step, train, val

/// Seeded permutation split: (validation, training) index lists with
/// exactly floor(fraction * n) validation entries.
std::pair<std::vector<long>, std::vector<long>> train_val_split(
    long n, double fraction, std::uint64_t seed);

DynamicsModel make_dynamics_model(const DynamicsTrainConfig& cfg,
                                  int state_dim, int action_dim);

/// MLE training with a held-out validation split of exactly
/// floor(validation_fraction * N) transitions; returns the parameters with
/// the best validation NLL seen at the periodic evaluations.
DynamicsModel train_dynamics(const DynamicsTrainConfig& cfg,
                             const OfflineDataset& data,
                             const DynamicsLogFn& log = {});

}  // namespace momo
