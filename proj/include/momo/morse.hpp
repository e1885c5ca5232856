#pragma once

#include <functional>
#include <optional>

#include "momo/adam.hpp"
#include "momo/dataset.hpp"
#include "momo/parallel.hpp"

namespace momo {

/// RBF Morse kernel K(z, t) = exp(-lambda ||z - t||^2); valued in [0, 1],
/// equal to 1 iff z == t.
struct MorseKernel {
  double scale = 1.0;  // lambda
};

double kernel_eval(const MorseKernel& k, const Vec& z, const Vec& t);

/// Morse neural network: embedding f(s ++ a) -> R^e composed with the
/// kernel against a fixed (untrained) target embedding. certainty in [0, 1]
/// reads as confidence that (s, a) is on dataset support.
struct MorseNetwork {
  nn::DenseNet embed;
  MorseKernel kernel;
  Vec target;  // fixed, not trained
  int state_dim = 0;
  int action_dim = 0;

  int embedding_dim() const { return static_cast<int>(target.size()); }
  Vec concat(const Vec& s, const Vec& a) const;
};

double certainty(const MorseNetwork& m, const Vec& s, const Vec& a);
/// Computed directly as -lambda ||f - t||^2, never via log(kernel), so it
/// stays exact where the kernel underflows.
double log_certainty(const MorseNetwork& m, const Vec& s, const Vec& a);

/// Batched log-certainty over columns of SA = [s; a].
RowVec log_certainty_batch(const MorseNetwork& m, const Mat& SA,
                           Exec exec = default_exec());

struct MorseTrainConfig {
  double lambda = 1.0;
  int batch = 512;
  long steps = 100000;
  double lr = 3e-4;
  int negatives_per_state = 1;
  double grad_penalty_weight = 1.0;
  double lipschitz = 1.0;
  int hidden = 256;
  int hidden_layers = 4;
  int embed_per_action_dim = 2;  // e = this * action_dim
  long log_every = 1000;
  std::uint64_t seed = 0;
};

struct MorseLossTerms {
  double total = 0.0;     // positive + negative + weight * penalty
  double positive = 0.0;  // mean -log K over data pairs
  double negative = 0.0;  // mean K over uniform-action pairs
  double penalty = 0.0;   // mean hinge^2 over all samples, unweighted
};

/// Contrastive loss: mean(-log K(f(s,a), t)) over the batch plus
/// mean(K(f(s,a_u), t)) over the negatives plus the weighted Lipschitz
/// penalty (per-sample mean over both sample sets). Accumulates parameter
/// gradients into *grad when non-null.
MorseLossTerms morse_loss(const MorseNetwork& m, const Mat& SA_pos,
                          const Mat& SA_neg, double penalty_weight,
                          double lipschitz, Vec* grad,
                          Exec exec = default_exec());

/// Sum over sample columns of max(0, ||grad_x d(x)|| - L)^2 where
/// d(x) = ||f(x) - t|| is the embedding distance field. Accumulates
/// d(sum)/dparams into *grad when non-null.
double gradient_penalty(const MorseNetwork& m, const Mat& SA, double lipschitz,
                        Vec* grad, Exec exec = default_exec());

/// Per-step training metrics callback: (step, terms).
using MorseLogFn = std::function<void(long, const MorseLossTerms&)>;

/// Alg.-style training loop: sample data pairs and uniform negative
/// actions, one Adam step per iteration. Returns the trained network.
MorseNetwork train_morse(const MorseTrainConfig& cfg,
                         const OfflineDataset& data,
                         const MorseLogFn& log = {});

/// Fresh, untrained network with the architecture the config describes.
MorseNetwork make_morse_network(const MorseTrainConfig& cfg, int state_dim,
                                int action_dim);

struct GridSpec {
  int nx = 126;
  int ny = 127;
  double lo = -1.8;
  double hi = 1.8;
};

struct GridRow {
  double a1, a2, certainty;
};

/// Certainty over a uniform action grid for one state; rows in row-major
/// order (a1 outer, a2 inner). Requires a 2-dimensional action space.
std::vector<GridRow> density_grid(const MorseNetwork& m, const Vec& s,
                                  const GridSpec& spec = {},
                                  Exec exec = default_exec());

}  // namespace momo
