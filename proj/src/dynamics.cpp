#include "momo/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace momo {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
// margin keeping the soft clamp strictly inside [lo, hi]
constexpr double kClampMargin = 1e-4;

double softplus(double t) {
  if (t > 30.0) return t;
  if (t < -30.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

double soft_clamp(double x, double lo, double hi, double* dout) {
  const double h = hi - kClampMargin;
  const double l = lo + kClampMargin;
  const double y = h - softplus(h - x);
  const double z = l + softplus(y - l);
  if (dout) *dout = sigmoid(y - l) * sigmoid(h - x);
  return z;
}

DynamicsModel::Prediction DynamicsModel::predict(const Vec& s,
                                                 const Vec& a) const {
  require(s.size() == state_dim && a.size() == action_dim,
          "DynamicsModel::predict: dimension mismatch");
  Vec x(state_dim + action_dim);
  x << s, a;
  const Vec y = body.forward(x);
  const int k = state_dim + 1;
  Prediction p;
  p.mean = y.head(k);
  p.logstd.resize(k);
  for (int i = 0; i < k; ++i)
    p.logstd[i] = soft_clamp(y[k + i], logstd_low, logstd_high);
  return p;
}

DynamicsStep dynamics_step(const DynamicsModel& model, const Vec& s,
                           const Vec& a, Rng& rng, bool deterministic) {
  const auto p = model.predict(s, a);
  const int S = model.state_dim;
  Vec noise = Vec::Zero(S + 1);
  if (!deterministic)
    for (int i = 0; i < S + 1; ++i) noise[i] = rng.normal();
  DynamicsStep out;
  out.s2 = s + p.mean.head(S) +
           (noise.head(S).array() * p.logstd.head(S).array().exp()).matrix();
  out.r = p.mean[S] + noise[S] * std::exp(p.logstd[S]);
  return out;
}

double dynamics_nll(const DynamicsModel& model, const Mat& SA,
                    const Mat& target, Vec* grad, Exec exec) {
  const int S = model.state_dim;
  const int k = S + 1;
  require(SA.cols() > 0, "dynamics_nll: empty batch");
  require(SA.rows() == S + model.action_dim && target.rows() == k &&
              target.cols() == SA.cols(),
          "dynamics_nll: shape mismatch");
  if (grad)
    require(grad->size() == model.body.param_count(),
            "dynamics_nll: gradient accumulator size mismatch");

  const int n = static_cast<int>(SA.cols());
  const auto blocks = split_blocks(n);
  const int nblocks = static_cast<int>(blocks.size());
  std::vector<Vec> bgrad;
  if (grad) bgrad.assign(nblocks, Vec::Zero(model.body.param_count()));
  std::vector<double> bloss(nblocks, 0.0);

  for_each_block(nblocks, exec, [&](int b) {
    const auto& r = blocks[b];
    const int nb = r.size();
    const Mat X = SA.middleCols(r.begin, r.size());
    const Mat T = target.middleCols(r.begin, r.size());
    nn::BatchTape tape;
    Mat Y = model.body.forward_batch(X, grad ? &tape : nullptr);
    Mat dY;
    if (grad) dY = Mat::Zero(Y.rows(), nb);
    for (int i = 0; i < nb; ++i) {
      for (int d = 0; d < k; ++d) {
        const double mu = Y(d, i);
        double dclamp = 0.0;
        const double ls =
            soft_clamp(Y(k + d, i), model.logstd_low, model.logstd_high,
                       grad ? &dclamp : nullptr);
        const double inv_var = std::exp(-2.0 * ls);
        const double err = T(d, i) - mu;
        bloss[b] += 0.5 * (err * err * inv_var + 2.0 * ls + kLog2Pi);
        if (grad) {
          dY(d, i) = -err * inv_var / n;
          dY(k + d, i) = (1.0 - err * err * inv_var) * dclamp / n;
        }
      }
    }
    if (grad) model.body.backward_batch(tape, dY, &bgrad[b], false);
  });

  double loss = 0.0;
  for (int b = 0; b < nblocks; ++b) {
    loss += bloss[b];
    if (grad) *grad += bgrad[b];
  }
  return loss / n;
}

std::pair<std::vector<long>, std::vector<long>> train_val_split(
    long n, double fraction, std::uint64_t seed) {
  require(n >= 0 && fraction >= 0 && fraction < 1,
          "train_val_split: bad arguments");
  Rng rng(derive_seed(seed, 0x5B117));
  std::vector<long> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (long i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_int(static_cast<int>(i + 1))]);
  const long n_val = static_cast<long>(fraction * n);
  return {std::vector<long>(perm.begin(), perm.begin() + n_val),
          std::vector<long>(perm.begin() + n_val, perm.end())};
}

DynamicsModel make_dynamics_model(const DynamicsTrainConfig& cfg,
                                  int state_dim, int action_dim) {
  require(state_dim > 0 && action_dim > 0,
          "make_dynamics_model: dimensions must be positive");
  DynamicsModel m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  nn::Architecture arch;
  arch.input_dim = state_dim + action_dim;
  arch.output_dim = 2 * (state_dim + 1);
  arch.hidden.assign(cfg.hidden_layers, cfg.hidden);
  arch.mode = nn::ArchMode::Plain;
  arch.layer_norm = true;
  m.body = nn::DenseNet(arch);
  Rng rng(derive_seed(cfg.seed, 0xD74A317C));
  m.body.init_params(rng);
  return m;
}

DynamicsModel train_dynamics(const DynamicsTrainConfig& cfg,
                             const OfflineDataset& data,
                             const DynamicsLogFn& log) {
  require(!data.empty(), "train_dynamics: dataset is empty");
  require(cfg.batch > 0 && cfg.steps >= 0 && cfg.lr > 0 &&
              cfg.validation_fraction >= 0 && cfg.validation_fraction < 1,
          "train_dynamics: config values out of range");

  const int S = data.state_dim(), A = data.action_dim();
  DynamicsModel m = make_dynamics_model(cfg, S, A);
  nn::AdamState opt(m.body.param_count(), {cfg.lr});
  Rng rng(derive_seed(cfg.seed, 0xD74A77A1));

  // held-out split: exactly floor(fraction * N) transitions
  auto [val_idx, train_idx] =
      train_val_split(data.size(), cfg.validation_fraction, cfg.seed);
  const long n_val = static_cast<long>(val_idx.size());
  require(!train_idx.empty(), "train_dynamics: no training data after split");

  auto fill = [&](Mat& SA, Mat& T, long col, const Transition& t) {
    SA.col(col).head(S) = t.s;
    SA.col(col).tail(A) = t.a;
    T.col(col).head(S) = t.s2 - t.s;
    T(S, col) = t.r;
  };

  Mat val_SA(S + A, n_val), val_T(S + 1, n_val);
  for (long i = 0; i < n_val; ++i) fill(val_SA, val_T, i, data[val_idx[i]]);

  auto val_nll = [&]() {
    return n_val > 0 ? dynamics_nll(m, val_SA, val_T, nullptr)
                     : std::numeric_limits<double>::quiet_NaN();
  };

  Mat SA(S + A, cfg.batch), T(S + 1, cfg.batch);
  Vec grad(m.body.param_count());
  double best_val = std::numeric_limits<double>::infinity();
  Vec best_params;

  for (long step = 0; step < cfg.steps; ++step) {
    for (int i = 0; i < cfg.batch; ++i) {
      const long j =
          train_idx[rng.uniform_int(static_cast<int>(train_idx.size()))];
      fill(SA, T, i, data[j]);
    }
    grad.setZero();
    const double loss = dynamics_nll(m, SA, T, &grad);
    if (!std::isfinite(loss))
      throw TrainingError("non-finite dynamics NLL", step);
    try {
      nn::adam_step(m.body, grad, opt);
    } catch (const TrainingError& e) {
      throw TrainingError("dynamics training: " + std::string(e.what()), step,
                          e.param());
    }
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      const double v = val_nll();
      if (n_val > 0 && v < best_val) {
        best_val = v;
        best_params = m.body.params();
      }
      if (log) log(step + 1, loss, v);
    }
  }
  if (best_params.size() > 0) {
    m.body.params() = best_params;
    m.body.mark_params_changed();
  }
  return m;
}

}  // namespace momo
