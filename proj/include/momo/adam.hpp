#pragma once

#include "momo/nn.hpp"

namespace momo::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment accumulators mirror the flat parameter
/// vector of the net they drive.
class AdamState {
public:
  AdamState() = default;
  AdamState(long param_count, AdamConfig cfg = {});

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return t_; }
  const Vec& first_moment() const { return m_; }
  const Vec& second_moment() const { return v_; }

  /// One update in place. Throws TrainingError on a non-finite gradient
  /// component, naming the offending parameter via the layout.
  void step(Vec& params, const Vec& grad,
            const std::vector<ParamEntry>* layout = nullptr);

private:
  AdamConfig cfg_;
  Vec m_, v_;
  long t_ = 0;
};

/// Convenience: update a net's parameters and invalidate its tapes.
void adam_step(DenseNet& net, const Vec& grad, AdamState& state);

}  // namespace momo::nn
