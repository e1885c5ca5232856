#include "momo/adam.hpp"

#include <cmath>

namespace momo::nn {

AdamState::AdamState(long param_count, AdamConfig cfg)
    : cfg_(cfg), m_(Vec::Zero(param_count)), v_(Vec::Zero(param_count)) {
  require(cfg.lr > 0 && cfg.beta1 > 0 && cfg.beta1 < 1 && cfg.beta2 > 0 &&
              cfg.beta2 < 1 && cfg.eps > 0,
          "AdamConfig: hyperparameters out of range");
}

void AdamState::step(Vec& params, const Vec& grad,
                     const std::vector<ParamEntry>* layout) {
  require(params.size() == m_.size() && grad.size() == m_.size(),
          "AdamState::step: shape mismatch");
  const long n = params.size();
  for (long i = 0; i < n; ++i) {
    if (!std::isfinite(grad[i])) {
      std::string name = "index " + std::to_string(i);
      if (layout) {
        for (const auto& e : *layout) {
          if (i >= e.offset && i < e.offset + e.count()) {
            name = e.name;
            break;
          }
        }
      }
      throw TrainingError("non-finite gradient component", -1, name);
    }
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (long i = 0; i < n; ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mhat = m_[i] / corr1;
    const double vhat = v_[i] / corr2;
    params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

void adam_step(DenseNet& net, const Vec& grad, AdamState& state) {
  state.step(net.params(), grad, &net.layout());
  net.mark_params_changed();
}

}  // namespace momo::nn
