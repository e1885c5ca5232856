#include "momo/morse.hpp"

#include <cmath>

namespace momo {

double kernel_eval(const MorseKernel& k, const Vec& z, const Vec& t) {
  require(z.size() == t.size(), "kernel_eval: embedding size mismatch");
  require(k.scale > 0, "kernel_eval: scale must be positive");
  return std::exp(-k.scale * (z - t).squaredNorm());
}

Vec MorseNetwork::concat(const Vec& s, const Vec& a) const {
  require(s.size() == state_dim && a.size() == action_dim,
          "MorseNetwork: state/action dimension mismatch");
  Vec x(state_dim + action_dim);
  x << s, a;
  return x;
}

double certainty(const MorseNetwork& m, const Vec& s, const Vec& a) {
  return kernel_eval(m.kernel, m.embed.forward(m.concat(s, a)), m.target);
}

double log_certainty(const MorseNetwork& m, const Vec& s, const Vec& a) {
  const Vec f = m.embed.forward(m.concat(s, a));
  return -m.kernel.scale * (f - m.target).squaredNorm();
}

RowVec log_certainty_batch(const MorseNetwork& m, const Mat& SA, Exec exec) {
  require(SA.rows() == m.state_dim + m.action_dim,
          "log_certainty_batch: input dimension mismatch");
  const int n = static_cast<int>(SA.cols());
  RowVec out(n);
  const auto blocks = split_blocks(n);
  for_each_block(static_cast<int>(blocks.size()), exec, [&](int b) {
    const auto& r = blocks[b];
    Mat F = m.embed.forward_batch(SA.middleCols(r.begin, r.size()));
    for (int i = 0; i < r.size(); ++i)
      out[r.begin + i] =
          -m.kernel.scale * (F.col(i) - m.target).squaredNorm();
  });
  return out;
}

namespace {

/// Shared penalty kernel for one block of columns. Adds the raw hinge^2 sum
/// for the block to *pen_sum; when grad is non-null, accumulates
/// seed_scale * d(sum)/dparams.
void penalty_block(const MorseNetwork& m, const Mat& X, double lipschitz,
                   double seed_scale, Vec* grad, double* pen_sum) {
  const int nb = static_cast<int>(X.cols());
  nn::BatchTape tape;
  Mat F = m.embed.forward_batch(X, &tape);
  const int e = m.embedding_dim();

  // unit residual directions: d(x) = ||f(x) - t||, grad_f d = (f - t)/d
  Mat U(e, nb);
  Vec dist(nb);
  for (int i = 0; i < nb; ++i) {
    Vec r = F.col(i) - m.target;
    const double d = r.norm();
    dist[i] = d;
    U.col(i) = d > 1e-300 ? Vec(r / d) : Vec(Vec::Zero(e));
  }
  // input gradient of the distance field per sample
  Mat GX = m.embed.backward_batch(tape, U, nullptr, true);

  Vec q(nb), hinge(nb);
  bool any_active = false;
  for (int i = 0; i < nb; ++i) {
    q[i] = GX.col(i).norm();
    hinge[i] = std::max(0.0, q[i] - lipschitz);
    *pen_sum += hinge[i] * hinge[i];
    any_active = any_active || hinge[i] > 0.0;
  }
  if (!grad || !any_active) return;

  // d(hinge^2)/dparams needs d(||grad_x d||)/dparams: differentiate the
  // directional derivative of d along v = grad_x d (held constant).
  nn::TangentTape ttape;
  m.embed.forward_tangent_batch(X, GX, ttape);
  const Mat& Fdot = ttape.output_tangent();
  Mat gY = Mat::Zero(e, nb), gYdot = Mat::Zero(e, nb);
  for (int i = 0; i < nb; ++i) {
    if (hinge[i] <= 0.0 || dist[i] <= 1e-300 || q[i] <= 0.0) continue;
    const double c = seed_scale * 2.0 * hinge[i] / q[i];
    const double ddot = U.col(i).dot(Fdot.col(i));
    gYdot.col(i) = c * U.col(i);
    gY.col(i) = c * (Fdot.col(i) - U.col(i) * ddot) / dist[i];
  }
  m.embed.backward_tangent_batch(ttape, gY, gYdot, *grad);
}

}  // namespace

MorseLossTerms morse_loss(const MorseNetwork& m, const Mat& SA_pos,
                          const Mat& SA_neg, double penalty_weight,
                          double lipschitz, Vec* grad, Exec exec) {
  require(SA_pos.cols() > 0, "morse_loss: empty batch");
  require(penalty_weight >= 0, "morse_loss: penalty weight must be >= 0");
  require(lipschitz > 0, "morse_loss: Lipschitz constant must be > 0");
  const int in_dim = m.state_dim + m.action_dim;
  require(SA_pos.rows() == in_dim &&
              (SA_neg.cols() == 0 || SA_neg.rows() == in_dim),
          "morse_loss: input dimension mismatch");
  if (grad)
    require(grad->size() == m.embed.param_count(),
            "morse_loss: gradient accumulator size mismatch");

  const int np = static_cast<int>(SA_pos.cols());
  const int nn_ = static_cast<int>(SA_neg.cols());
  const double lam = m.kernel.scale;
  const long total_samples = np + nn_;

  const auto pos_blocks = split_blocks(np);
  const auto neg_blocks = split_blocks(nn_);
  const int nb_pos = static_cast<int>(pos_blocks.size());
  const int ntasks = nb_pos + static_cast<int>(neg_blocks.size());

  std::vector<Vec> bgrad;
  if (grad) bgrad.assign(ntasks, Vec::Zero(m.embed.param_count()));
  std::vector<double> bpos(ntasks, 0.0), bneg(ntasks, 0.0), bpen(ntasks, 0.0);

  for_each_block(ntasks, exec, [&](int task) {
    const bool positive = task < nb_pos;
    const auto& r = positive ? pos_blocks[task] : neg_blocks[task - nb_pos];
    const Mat X = positive ? SA_pos.middleCols(r.begin, r.size())
                           : SA_neg.middleCols(r.begin, r.size());
    const int nb = r.size();
    Vec* g = grad ? &bgrad[task] : nullptr;

    nn::BatchTape tape;
    Mat F = m.embed.forward_batch(X, &tape);
    Mat R = F.colwise() - m.target;
    Mat dY(F.rows(), nb);
    if (positive) {
      // -log K = lambda * d^2, computed directly
      for (int i = 0; i < nb; ++i) {
        bpos[task] += lam * R.col(i).squaredNorm();
        dY.col(i) = (2.0 * lam / np) * R.col(i);
      }
    } else {
      for (int i = 0; i < nb; ++i) {
        const double k = std::exp(-lam * R.col(i).squaredNorm());
        bneg[task] += k;
        dY.col(i) = (-2.0 * lam * k / nn_) * R.col(i);
      }
    }
    if (g) m.embed.backward_batch(tape, dY, g, false);

    if (penalty_weight > 0.0)
      penalty_block(m, X, lipschitz, penalty_weight / total_samples, g,
                    &bpen[task]);
  });

  // combine in task order: deterministic independent of thread count
  MorseLossTerms terms;
  double pen_sum = 0.0;
  for (int t = 0; t < ntasks; ++t) {
    terms.positive += bpos[t];
    terms.negative += bneg[t];
    pen_sum += bpen[t];
    if (grad) *grad += bgrad[t];
  }
  terms.positive /= np;
  if (nn_ > 0) terms.negative /= nn_;
  terms.penalty = pen_sum / static_cast<double>(total_samples);
  terms.total =
      terms.positive + terms.negative + penalty_weight * terms.penalty;
  return terms;
}

double gradient_penalty(const MorseNetwork& m, const Mat& SA, double lipschitz,
                        Vec* grad, Exec exec) {
  require(lipschitz > 0, "gradient_penalty: Lipschitz constant must be > 0");
  require(SA.rows() == m.state_dim + m.action_dim,
          "gradient_penalty: input dimension mismatch");
  const int n = static_cast<int>(SA.cols());
  if (n == 0) return 0.0;
  const auto blocks = split_blocks(n);
  const int nblocks = static_cast<int>(blocks.size());
  std::vector<Vec> bgrad;
  if (grad) bgrad.assign(nblocks, Vec::Zero(m.embed.param_count()));
  std::vector<double> bpen(nblocks, 0.0);
  for_each_block(nblocks, exec, [&](int b) {
    const auto& r = blocks[b];
    penalty_block(m, SA.middleCols(r.begin, r.size()), lipschitz, 1.0,
                  grad ? &bgrad[b] : nullptr, &bpen[b]);
  });
  double sum = 0.0;
  for (int b = 0; b < nblocks; ++b) {
    sum += bpen[b];
    if (grad) *grad += bgrad[b];
  }
  return sum;
}

MorseNetwork make_morse_network(const MorseTrainConfig& cfg, int state_dim,
                                int action_dim) {
  require(state_dim > 0 && action_dim > 0,
          "make_morse_network: dimensions must be positive");
  require(cfg.lambda > 0 && cfg.hidden > 0 && cfg.hidden_layers > 0 &&
              cfg.embed_per_action_dim > 0,
          "make_morse_network: config values must be positive");
  MorseNetwork m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.kernel.scale = cfg.lambda;
  const int e = cfg.embed_per_action_dim * action_dim;
  m.target = Vec::Zero(e);
  nn::Architecture arch;
  arch.input_dim = state_dim + action_dim;
  arch.output_dim = e;
  arch.hidden.assign(cfg.hidden_layers, cfg.hidden);
  arch.mode = nn::ArchMode::D2rl;
  arch.layer_norm = true;
  arch.final_init_scale = 1e-2;
  m.embed = nn::DenseNet(arch);
  Rng rng(derive_seed(cfg.seed, 0x305E1217));
  m.embed.init_params(rng);
  return m;
}

MorseNetwork train_morse(const MorseTrainConfig& cfg,
                         const OfflineDataset& data, const MorseLogFn& log) {
  require(!data.empty(), "train_morse: dataset is empty");
  require(cfg.batch > 0 && cfg.steps >= 0 && cfg.lr > 0 &&
              cfg.negatives_per_state > 0,
          "train_morse: config values out of range");

  MorseNetwork m = make_morse_network(cfg, data.state_dim(), data.action_dim());
  nn::AdamState opt(m.embed.param_count(), {cfg.lr});
  Rng rng(derive_seed(cfg.seed, 0x305E77A1));
  const auto [box_lo, box_hi] = data.action_box(0.1);

  const int S = data.state_dim(), A = data.action_dim();
  const int B = cfg.batch;
  const int Bn = B * cfg.negatives_per_state;
  Mat SAp(S + A, B), SAn(S + A, Bn);
  Vec grad(m.embed.param_count());

  for (long step = 0; step < cfg.steps; ++step) {
    for (int i = 0; i < B; ++i) {
      const Transition& t = data[rng.uniform_int(static_cast<int>(data.size()))];
      SAp.col(i).head(S) = t.s;
      SAp.col(i).tail(A) = t.a;
    }
    for (int i = 0; i < Bn; ++i) {
      SAn.col(i).head(S) = SAp.col(i % B).head(S);
      for (int d = 0; d < A; ++d)
        SAn(S + d, i) = rng.uniform(box_lo[d], box_hi[d]);
    }
    grad.setZero();
    MorseLossTerms terms = morse_loss(m, SAp, SAn, cfg.grad_penalty_weight,
                                      cfg.lipschitz, &grad);
    if (!std::isfinite(terms.total))
      throw TrainingError("non-finite Morse loss", step);
    try {
      nn::adam_step(m.embed, grad, opt);
    } catch (const TrainingError& e) {
      throw TrainingError("Morse training: " + std::string(e.what()), step,
                          e.param());
    }
    if (log && ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps))
      log(step + 1, terms);
  }
  return m;
}

std::vector<GridRow> density_grid(const MorseNetwork& m, const Vec& s,
                                  const GridSpec& spec, Exec exec) {
  if (m.action_dim != 2)
    throw UnsupportedOperation(
        "density_grid: only 2-dimensional action spaces are supported");
  require(s.size() == m.state_dim, "density_grid: state dimension mismatch");
  require(spec.nx > 0 && spec.ny > 0 && spec.hi > spec.lo,
          "density_grid: bad grid spec");

  auto coord = [&](int i, int n) {
    return n == 1 ? 0.5 * (spec.lo + spec.hi)
                  : spec.lo + i * (spec.hi - spec.lo) / (n - 1);
  };
  const long N = static_cast<long>(spec.nx) * spec.ny;
  Mat SA(m.state_dim + 2, N);
  for (int i = 0; i < spec.nx; ++i) {
    for (int j = 0; j < spec.ny; ++j) {
      const long idx = static_cast<long>(i) * spec.ny + j;
      SA.col(idx).head(m.state_dim) = s;
      SA(m.state_dim, idx) = coord(i, spec.nx);
      SA(m.state_dim + 1, idx) = coord(j, spec.ny);
    }
  }
  RowVec logm = log_certainty_batch(m, SA, exec);
  std::vector<GridRow> rows(N);
  for (long idx = 0; idx < N; ++idx)
    rows[idx] = {SA(m.state_dim, idx), SA(m.state_dim + 1, idx),
                 std::exp(logm[idx])};
  return rows;
}

}  // namespace momo
