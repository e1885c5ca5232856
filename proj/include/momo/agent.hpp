#pragma once

#include <optional>

#include "momo/adam.hpp"
#include "momo/dynamics.hpp"
#include "momo/morse.hpp"
#include "momo/rollout.hpp"

namespace momo {

enum class TrainMode { ModelFree, ModelBased };

TrainMode parse_mode(const std::string& name);
std::string mode_name(TrainMode m);

struct AgentConfig {
  int hidden = 256;
  int hidden_layers = 2;
  double lr = 3e-4;
  int batch = 512;
  double gamma = 0.99;
  double rho = 0.005;  // target update rate
  int policy_freq = 2;
  double policy_noise = 0.5;
  double noise_clip = 0.5;
  double expl_noise = 0.1;
  bool critic_layer_norm = true;
  bool actor_layer_norm = false;
  // anti-exploration bonus inside the bootstrapped critic target; the
  // policy constraint is unaffected by this switch
  bool bonus = true;
  TrainMode mode = TrainMode::ModelFree;
  double real_ratio = 0.5;  // fraction of each batch drawn from real data
  int rollout_horizon = 100;
  double eps_trunc = 0.95;
  int rollouts_per_refresh = 50;
  long refresh_every = 250;
  std::size_t buffer_capacity = 100000;
  long steps = 1000000;
  long log_every = 1000;
  long eval_every = 1000;
  std::uint64_t seed = 0;
};

struct TransitionBatch {
  Mat S, A, S2;
  RowVec R, TERM;  // TERM is 0/1
  int size() const { return static_cast<int>(S.cols()); }
};

/// Mean squared error of critic(SA) against fixed targets y; accumulates
/// critic parameter gradients into *grad when non-null.
double critic_regression_loss(const nn::DenseNet& critic, const Mat& SA,
                              const RowVec& y, Vec* grad,
                              Exec exec = default_exec());

/// Policy objective -mean[Q1(s, pi(s)) / denom + log M(s, pi(s))] where
/// pi(s) = center + half * tanh(actor(s)). When frozen_denom is set it is
/// used as the Q normalizer; otherwise the batch mean |Q1| is computed and
/// reported via *denom_out. The normalizer is a constant during
/// differentiation either way. Accumulates actor parameter gradients into
/// *grad; *mean_logm_out reports the batch mean log-certainty.
double actor_loss_grad(const nn::DenseNet& actor, const nn::DenseNet& critic1,
                       const MorseNetwork& morse, const Mat& S,
                       const Vec& act_center, const Vec& act_half,
                       std::optional<double> frozen_denom, double* denom_out,
                       double* mean_logm_out, Vec* grad,
                       Exec exec = default_exec());

/// TD3 actor-critic with twin critics and target copies. The Morse network
/// enters twice: log-certainty of the smoothed next action inside the
/// critic target (anti-exploration bonus) and log-certainty of the policy
/// action in the actor objective (behavior constraint).
class Td3Agent {
public:
  Td3Agent() = default;
  Td3Agent(const AgentConfig& cfg, int state_dim, int action_dim,
           Vec action_low, Vec action_high, std::uint64_t init_seed);

  const AgentConfig& config() const { return cfg_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const Vec& action_low() const { return act_low_; }
  const Vec& action_high() const { return act_high_; }

  /// Deterministic tanh-squashed actor output; with explore set, adds
  /// Gaussian noise (std expl_noise) and re-clips to the action bounds.
  Vec select_action(const Vec& s, bool explore, Rng& rng) const;

  struct CriticLosses {
    double critic1 = 0.0;
    double critic2 = 0.0;
  };

  /// One twin-critic regression step toward
  ///   y = r + gamma * (min Q_target(s', a') + log M(s', a'))
  /// with TD3 target-policy smoothing; terminal transitions bootstrap
  /// nothing (y = r). The rng feeds the smoothing noise.
  CriticLosses critic_update(const MorseNetwork& morse,
                             const TransitionBatch& batch, Rng& rng,
                             Exec exec = default_exec());

  /// One actor ascent step on mean[Q1(s, pi(s)) / denom + log M(s, pi(s))]
  /// with denom = mean |Q1| over the batch held constant, followed by the
  /// soft target update. Returns the (negated) objective and the batch mean
  /// log-certainty of the policy actions.
  struct ActorResult {
    double loss = 0.0;
    double mean_log_certainty = 0.0;
  };
  ActorResult actor_update(const MorseNetwork& morse, const Mat& S,
                           Exec exec = default_exec());

  // Eq.-10 pessimism accounting: how many target elements were checked and
  // how many penalized targets exceeded the unpenalized ones (must be 0).
  long pessimism_checked() const { return pessimism_checked_; }
  long pessimism_violations() const { return pessimism_violations_; }

  nn::DenseNet& actor() { return actor_; }
  const nn::DenseNet& actor() const { return actor_; }
  nn::DenseNet& critic1() { return critic1_; }
  const nn::DenseNet& critic1() const { return critic1_; }
  nn::DenseNet& critic2() { return critic2_; }
  const nn::DenseNet& critic2() const { return critic2_; }
  nn::DenseNet& target_actor() { return t_actor_; }
  const nn::DenseNet& target_actor() const { return t_actor_; }
  nn::DenseNet& target_critic1() { return t_critic1_; }
  const nn::DenseNet& target_critic1() const { return t_critic1_; }
  nn::DenseNet& target_critic2() { return t_critic2_; }
  const nn::DenseNet& target_critic2() const { return t_critic2_; }

  void soft_update_targets();

private:
  Vec squash(const Vec& u) const;

  AgentConfig cfg_;
  int state_dim_ = 0, action_dim_ = 0;
  Vec act_low_, act_high_, act_center_, act_half_;
  nn::DenseNet actor_, critic1_, critic2_;
  nn::DenseNet t_actor_, t_critic1_, t_critic2_;
  nn::AdamState opt_actor_, opt_c1_, opt_c2_;
  long pessimism_checked_ = 0;
  long pessimism_violations_ = 0;
};

struct AgentTrainResult {
  Td3Agent agent;
  std::vector<std::pair<long, double>> eval_curve;  // (step, mean return)
  double best_eval = std::numeric_limits<double>::quiet_NaN();
  long stopped_at_step = -1;  // early-stop step, -1 if it ran to cfg.steps
  long pessimism_checked = 0;
  long pessimism_violations = 0;
  long real_sampled = 0;
  long synthetic_sampled = 0;
  double mean_rollout_length = 0.0;  // over all refreshes
};

using EvalFn = std::function<double(const Td3Agent&, long step)>;

struct AgentLogRow {
  long step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double mean_log_certainty = 0.0;
  double mean_rollout_len = 0.0;
  double eval_return = std::numeric_limits<double>::quiet_NaN();
};
using AgentLogFn = std::function<void(const AgentLogRow&)>;

/// Full training loop. Model-based mode requires a dynamics model and
/// refreshes the synthetic buffer every refresh_every steps; each batch
/// draws ceil(real_ratio * batch) real transitions and fills the rest from
/// the buffer (shortfall refilled from real data). When stop_at_return is
/// set, training stops at the first evaluation reaching it.
AgentTrainResult train_agent(const AgentConfig& cfg,
                             const OfflineDataset& data,
                             const MorseNetwork& morse,
                             const DynamicsModel* dynamics,
                             const EvalFn& eval = {},
                             const AgentLogFn& log = {},
                             std::optional<double> stop_at_return = {},
                             Exec exec = default_exec());

}  // namespace momo
