#include "momo/agent.hpp"

#include <cmath>

namespace momo {

TrainMode parse_mode(const std::string& name) {
  if (name == "mf") return TrainMode::ModelFree;
  if (name == "mb") return TrainMode::ModelBased;
  throw ContractViolation("unknown mode '" + name + "' (expected mf or mb)");
}

std::string mode_name(TrainMode m) {
  return m == TrainMode::ModelFree ? "mf" : "mb";
}

namespace {

nn::Architecture mlp_arch(int in, int out, int hidden, int layers, bool norm,
                          double final_scale) {
  nn::Architecture a;
  a.input_dim = in;
  a.output_dim = out;
  a.hidden.assign(layers, hidden);
  a.mode = nn::ArchMode::Plain;
  a.layer_norm = norm;
  a.final_init_scale = final_scale;
  return a;
}

Mat stack_sa(const Mat& S, const Mat& A) {
  Mat SA(S.rows() + A.rows(), S.cols());
  SA.topRows(S.rows()) = S;
  SA.bottomRows(A.rows()) = A;
  return SA;
}

}  // namespace

double critic_regression_loss(const nn::DenseNet& critic, const Mat& SA,
                              const RowVec& y, Vec* grad, Exec exec) {
  const int B = static_cast<int>(SA.cols());
  require(B > 0, "critic_regression_loss: empty batch");
  require(y.size() == B, "critic_regression_loss: target size mismatch");
  const auto blocks = split_blocks(B);
  const int nblocks = static_cast<int>(blocks.size());
  std::vector<Vec> bgrad;
  if (grad) bgrad.assign(nblocks, Vec::Zero(critic.param_count()));
  std::vector<double> bloss(nblocks, 0.0);
  for_each_block(nblocks, exec, [&](int bi) {
    const auto& r = blocks[bi];
    const int nb = r.size();
    nn::BatchTape tape;
    RowVec q = critic.forward_batch(SA.middleCols(r.begin, nb),
                                    grad ? &tape : nullptr)
                   .row(0);
    Mat dq(1, nb);
    for (int i = 0; i < nb; ++i) {
      const double e = q[i] - y[r.begin + i];
      bloss[bi] += e * e;
      dq(0, i) = 2.0 * e / B;
    }
    if (grad) critic.backward_batch(tape, dq, &bgrad[bi], false);
  });
  double loss = 0.0;
  for (int bi = 0; bi < nblocks; ++bi) {
    loss += bloss[bi];
    if (grad) *grad += bgrad[bi];
  }
  return loss / B;
}

double actor_loss_grad(const nn::DenseNet& actor, const nn::DenseNet& critic1,
                       const MorseNetwork& morse, const Mat& S,
                       const Vec& act_center, const Vec& act_half,
                       std::optional<double> frozen_denom, double* denom_out,
                       double* mean_logm_out, Vec* grad, Exec exec) {
  const int B = static_cast<int>(S.cols());
  require(B > 0, "actor_loss_grad: empty batch");
  const int A = actor.output_dim();
  require(act_center.size() == A && act_half.size() == A,
          "actor_loss_grad: bound shape mismatch");

  const auto blocks = split_blocks(B);
  const int nblocks = static_cast<int>(blocks.size());

  struct Ws {
    nn::BatchTape actor_tape, critic_tape, morse_tape;
    Mat TanhU, SA;
    RowVec q1, logm;
  };
  std::vector<Ws> ws(nblocks);

  for_each_block(nblocks, exec, [&](int bi) {
    auto& w = ws[bi];
    const auto& r = blocks[bi];
    const int nb = r.size();
    const Mat Sb = S.middleCols(r.begin, nb);
    Mat U = actor.forward_batch(Sb, &w.actor_tape);
    w.TanhU = U.array().tanh().matrix();
    Mat Aact(A, nb);
    for (int i = 0; i < nb; ++i)
      Aact.col(i) =
          act_center + (act_half.array() * w.TanhU.col(i).array()).matrix();
    w.SA = stack_sa(Sb, Aact);
    w.q1 = critic1.forward_batch(w.SA, &w.critic_tape).row(0);
    Mat F = morse.embed.forward_batch(w.SA, &w.morse_tape);
    w.logm.resize(nb);
    for (int i = 0; i < nb; ++i)
      w.logm[i] =
          -morse.kernel.scale * (F.col(i) - morse.target).squaredNorm();
  });

  double abs_q_sum = 0.0, q_sum = 0.0, logm_sum = 0.0;
  for (int bi = 0; bi < nblocks; ++bi) {
    abs_q_sum += ws[bi].q1.array().abs().sum();
    q_sum += ws[bi].q1.sum();
    logm_sum += ws[bi].logm.sum();
  }
  const double denom =
      frozen_denom ? *frozen_denom : std::max(abs_q_sum / B, 1e-12);
  if (denom_out) *denom_out = denom;
  if (mean_logm_out) *mean_logm_out = logm_sum / B;
  const double loss = -(q_sum / (B * denom) + logm_sum / B);

  if (grad) {
    std::vector<Vec> bgrad(nblocks, Vec::Zero(actor.param_count()));
    for_each_block(nblocks, exec, [&](int bi) {
      auto& w = ws[bi];
      const int nb = static_cast<int>(w.SA.cols());
      Mat dq(1, nb);
      dq.setConstant(-1.0 / (B * denom));
      Mat dSA_q = critic1.backward_batch(w.critic_tape, dq, nullptr, true);

      const Mat& F = w.morse_tape.output();
      Mat dF(F.rows(), nb);
      for (int i = 0; i < nb; ++i)
        dF.col(i) =
            (2.0 * morse.kernel.scale / B) * (F.col(i) - morse.target);
      Mat dSA_m = morse.embed.backward_batch(w.morse_tape, dF, nullptr, true);

      Mat dA = dSA_q.bottomRows(A) + dSA_m.bottomRows(A);
      Mat dU(A, nb);
      for (int i = 0; i < nb; ++i)
        dU.col(i) = (dA.col(i).array() * act_half.array() *
                     (1.0 - w.TanhU.col(i).array().square()))
                        .matrix();
      actor.backward_batch(w.actor_tape, dU, &bgrad[bi], false);
    });
    for (int bi = 0; bi < nblocks; ++bi) *grad += bgrad[bi];
  }
  return loss;
}

Td3Agent::Td3Agent(const AgentConfig& cfg, int state_dim, int action_dim,
                   Vec action_low, Vec action_high, std::uint64_t init_seed)
    : cfg_(cfg),
      state_dim_(state_dim),
      action_dim_(action_dim),
      act_low_(std::move(action_low)),
      act_high_(std::move(action_high)) {
  require(state_dim_ > 0 && action_dim_ > 0,
          "Td3Agent: dimensions must be positive");
  require(act_low_.size() == action_dim_ && act_high_.size() == action_dim_ &&
              (act_high_.array() > act_low_.array()).all(),
          "Td3Agent: bad action bounds");
  require(cfg_.real_ratio >= 0.0 && cfg_.real_ratio <= 1.0,
          "Td3Agent: real_ratio outside [0, 1]");
  require(cfg_.rollout_horizon >= 1, "Td3Agent: rollout horizon must be >= 1");
  require(cfg_.eps_trunc >= 0.0 && cfg_.eps_trunc <= 1.0,
          "Td3Agent: eps_trunc outside [0, 1]");
  require(cfg_.policy_freq >= 1, "Td3Agent: policy_freq must be >= 1");
  act_center_ = 0.5 * (act_high_ + act_low_);
  act_half_ = 0.5 * (act_high_ - act_low_);

  actor_ = nn::DenseNet(mlp_arch(state_dim_, action_dim_, cfg_.hidden,
                                 cfg_.hidden_layers, cfg_.actor_layer_norm,
                                 1e-2));
  critic1_ = nn::DenseNet(mlp_arch(state_dim_ + action_dim_, 1, cfg_.hidden,
                                   cfg_.hidden_layers, cfg_.critic_layer_norm,
                                   1.0));
  critic2_ = nn::DenseNet(mlp_arch(state_dim_ + action_dim_, 1, cfg_.hidden,
                                   cfg_.hidden_layers, cfg_.critic_layer_norm,
                                   1.0));
  Rng r0(derive_seed(init_seed, 0xAC7012));
  Rng r1(derive_seed(init_seed, 0xC2171C1));
  Rng r2(derive_seed(init_seed, 0xC2171C2));
  actor_.init_params(r0);
  critic1_.init_params(r1);
  critic2_.init_params(r2);
  t_actor_ = actor_;
  t_critic1_ = critic1_;
  t_critic2_ = critic2_;
  opt_actor_ = nn::AdamState(actor_.param_count(), {cfg_.lr});
  opt_c1_ = nn::AdamState(critic1_.param_count(), {cfg_.lr});
  opt_c2_ = nn::AdamState(critic2_.param_count(), {cfg_.lr});
}

Vec Td3Agent::squash(const Vec& u) const {
  return act_center_ + (act_half_.array() * u.array().tanh()).matrix();
}

Vec Td3Agent::select_action(const Vec& s, bool explore, Rng& rng) const {
  require(s.size() == state_dim_, "select_action: state dimension mismatch");
  require(s.allFinite(), "select_action: non-finite state");
  Vec a = squash(actor_.forward(s));
  if (explore) {
    for (int d = 0; d < action_dim_; ++d)
      a[d] += cfg_.expl_noise * rng.normal();
    a = a.cwiseMax(act_low_).cwiseMin(act_high_);
  }
  return a;
}

Td3Agent::CriticLosses Td3Agent::critic_update(const MorseNetwork& morse,
                                               const TransitionBatch& batch,
                                               Rng& rng, Exec exec) {
  const int B = batch.size();
  require(B > 0, "critic_update: empty batch");
  require(batch.S.rows() == state_dim_ && batch.A.rows() == action_dim_ &&
              batch.S2.rows() == state_dim_ && batch.R.size() == B &&
              batch.TERM.size() == B,
          "critic_update: batch shape mismatch");

  // target-policy smoothing noise, drawn serially for determinism
  Mat noise(action_dim_, B);
  for (int i = 0; i < B; ++i)
    for (int d = 0; d < action_dim_; ++d)
      noise(d, i) = std::clamp(cfg_.policy_noise * rng.normal(),
                               -cfg_.noise_clip, cfg_.noise_clip);

  const auto blocks = split_blocks(B);
  const int nblocks = static_cast<int>(blocks.size());
  RowVec y(B);
  std::vector<long> bviol(nblocks, 0);

  for_each_block(nblocks, exec, [&](int bi) {
    const auto& r = blocks[bi];
    const int nb = r.size();
    const Mat S2 = batch.S2.middleCols(r.begin, nb);
    Mat U2 = t_actor_.forward_batch(S2);
    Mat A2(action_dim_, nb);
    for (int i = 0; i < nb; ++i) {
      Vec a = squash(U2.col(i)) + noise.col(r.begin + i);
      A2.col(i) = a.cwiseMax(act_low_).cwiseMin(act_high_);
    }
    const Mat SA2 = stack_sa(S2, A2);
    RowVec q1t = t_critic1_.forward_batch(SA2).row(0);
    RowVec q2t = t_critic2_.forward_batch(SA2).row(0);
    Mat F = morse.embed.forward_batch(SA2);
    for (int i = 0; i < nb; ++i) {
      const double qmin = std::min(q1t[i], q2t[i]);
      const double logm =
          -morse.kernel.scale * (F.col(i) - morse.target).squaredNorm();
      const double boot = cfg_.bonus ? qmin + logm : qmin;
      if (cfg_.bonus && logm > 0.0) ++bviol[bi];  // penalized > unpenalized
      y[r.begin + i] = batch.R[r.begin + i] +
                       cfg_.gamma * (1.0 - batch.TERM[r.begin + i]) * boot;
    }
  });
  for (int bi = 0; bi < nblocks; ++bi) pessimism_violations_ += bviol[bi];
  pessimism_checked_ += cfg_.bonus ? B : 0;
  if (!y.allFinite())
    throw TrainingError("non-finite critic target (batch of " +
                        std::to_string(B) + ")");

  const Mat SA = stack_sa(batch.S, batch.A);
  Vec g1 = Vec::Zero(critic1_.param_count());
  Vec g2 = Vec::Zero(critic2_.param_count());
  CriticLosses losses;
  losses.critic1 = critic_regression_loss(critic1_, SA, y, &g1, exec);
  losses.critic2 = critic_regression_loss(critic2_, SA, y, &g2, exec);
  if (!std::isfinite(losses.critic1) || !std::isfinite(losses.critic2))
    throw TrainingError("non-finite critic loss");
  nn::adam_step(critic1_, g1, opt_c1_);
  nn::adam_step(critic2_, g2, opt_c2_);
  return losses;
}

Td3Agent::ActorResult Td3Agent::actor_update(const MorseNetwork& morse,
                                             const Mat& S, Exec exec) {
  Vec grad = Vec::Zero(actor_.param_count());
  double mean_logm = 0.0;
  const double loss =
      actor_loss_grad(actor_, critic1_, morse, S, act_center_, act_half_,
                      std::nullopt, nullptr, &mean_logm, &grad, exec);
  if (!std::isfinite(loss)) throw TrainingError("non-finite actor loss");
  nn::adam_step(actor_, grad, opt_actor_);
  soft_update_targets();
  return {loss, mean_logm};
}

void Td3Agent::soft_update_targets() {
  auto lerp = [&](nn::DenseNet& target, const nn::DenseNet& online) {
    target.params() =
        cfg_.rho * online.params() + (1.0 - cfg_.rho) * target.params();
    target.mark_params_changed();
  };
  lerp(t_actor_, actor_);
  lerp(t_critic1_, critic1_);
  lerp(t_critic2_, critic2_);
}

AgentTrainResult train_agent(const AgentConfig& cfg,
                             const OfflineDataset& data,
                             const MorseNetwork& morse,
                             const DynamicsModel* dynamics, const EvalFn& eval,
                             const AgentLogFn& log,
                             std::optional<double> stop_at_return, Exec exec) {
  require(!data.empty(), "train_agent: dataset is empty");
  require(cfg.batch > 0 && cfg.steps >= 0, "train_agent: bad config");
  require(morse.state_dim == data.state_dim() &&
              morse.action_dim == data.action_dim(),
          "train_agent: Morse network dimensions do not match the dataset");
  const bool mb = cfg.mode == TrainMode::ModelBased;
  if (mb) {
    require(dynamics != nullptr,
            "train_agent: model-based mode requires a dynamics model");
    require(dynamics->state_dim == data.state_dim() &&
                dynamics->action_dim == data.action_dim(),
            "train_agent: dynamics model dimensions do not match the dataset");
  }

  AgentTrainResult res;
  res.agent = Td3Agent(cfg, data.state_dim(), data.action_dim(),
                       data.action_low(), data.action_high(),
                       derive_seed(cfg.seed, 0xA6E017));
  Td3Agent& agent = res.agent;

  Rng rng(derive_seed(cfg.seed, 0x7EA11));
  SyntheticBuffer buffer(cfg.buffer_capacity);
  const int B = cfg.batch;
  const int S = data.state_dim(), A = data.action_dim();

  TransitionBatch batch;
  batch.S.resize(S, B);
  batch.A.resize(A, B);
  batch.S2.resize(S, B);
  batch.R.resize(B);
  batch.TERM.resize(B);
  auto put = [&](int col, const Transition& t) {
    batch.S.col(col) = t.s;
    batch.A.col(col) = t.a;
    batch.S2.col(col) = t.s2;
    batch.R[col] = t.r;
    batch.TERM[col] = t.terminal ? 1.0 : 0.0;
  };

  double critic_loss = 0.0, actor_loss = 0.0, mean_logm = 0.0;
  double last_roll_len = 0.0, roll_len_sum = 0.0;
  long refreshes = 0;
  long refresh_idx = 0;

  for (long step = 0; step < cfg.steps; ++step) {
    try {
      if (mb && step % cfg.refresh_every == 0) {
        RolloutConfig rc;
        rc.horizon = cfg.rollout_horizon;
        rc.eps_trunc = cfg.eps_trunc;
        rc.count = cfg.rollouts_per_refresh;
        PolicyFn policy = [&agent](const Vec& s, Rng& prng) {
          return agent.select_action(s, true, prng);
        };
        auto stats = generate_rollouts(
            policy, morse, *dynamics, data, rc,
            derive_seed(cfg.seed, 0x5011,
                        static_cast<std::uint64_t>(refresh_idx)),
            buffer, exec);
        ++refresh_idx;
        last_roll_len = stats.mean_length;
        roll_len_sum += stats.mean_length;
        ++refreshes;
      }

      int n_real = B;
      if (mb) {
        const int want_real = static_cast<int>(std::ceil(cfg.real_ratio * B));
        const int want_synth = B - want_real;
        const int n_synth = static_cast<int>(
            std::min<long>(want_synth, static_cast<long>(buffer.size())));
        n_real = B - n_synth;
      }
      for (int i = 0; i < n_real; ++i)
        put(i, data[rng.uniform_int(static_cast<int>(data.size()))]);
      for (int i = n_real; i < B; ++i) put(i, buffer.sample(rng));
      res.real_sampled += n_real;
      res.synthetic_sampled += B - n_real;

      auto cl = agent.critic_update(morse, batch, rng, exec);
      critic_loss = 0.5 * (cl.critic1 + cl.critic2);
      if ((step + 1) % cfg.policy_freq == 0) {
        auto ar = agent.actor_update(morse, batch.S, exec);
        actor_loss = ar.loss;
        mean_logm = ar.mean_log_certainty;
      }
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()), step, e.param());
    }

    double eval_ret = std::numeric_limits<double>::quiet_NaN();
    const bool eval_now = eval && (step + 1) % cfg.eval_every == 0;
    if (eval_now) {
      eval_ret = eval(agent, step + 1);
      res.eval_curve.emplace_back(step + 1, eval_ret);
      if (std::isnan(res.best_eval) || eval_ret > res.best_eval)
        res.best_eval = eval_ret;
    }
    if (log && ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      AgentLogRow row;
      row.step = step + 1;
      row.critic_loss = critic_loss;
      row.actor_loss = actor_loss;
      row.mean_log_certainty = mean_logm;
      row.mean_rollout_len = mb ? last_roll_len : 0.0;
      row.eval_return = eval_ret;
      log(row);
    }
    if (eval_now && stop_at_return && eval_ret >= *stop_at_return) {
      res.stopped_at_step = step + 1;
      break;
    }
  }

  res.pessimism_checked = agent.pessimism_checked();
  res.pessimism_violations = agent.pessimism_violations();
  res.mean_rollout_length = refreshes > 0 ? roll_len_sum / refreshes : 0.0;
  return res;
}

}  // namespace momo
