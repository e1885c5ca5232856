#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "momo/common.hpp"
#include "momo/rng.hpp"

namespace momo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

namespace nn {

inline constexpr double kLayerNormEps = 1e-5;

enum class ArchMode { Plain, D2rl };

/// Architecture description. Parameter layout, shapes and counts are a pure
/// function of this struct.
struct Architecture {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<int> hidden;        // widths of hidden layers, in order
  ArchMode mode = ArchMode::Plain;
  bool layer_norm = false;        // normalize hidden pre-activations
  double final_init_scale = 1.0;  // init scale of the output layer

  bool operator==(const Architecture&) const = default;
};

/// Resolved per-layer shape. In D2rl mode every hidden layer after the
/// first takes [previous hidden output ; raw input], so its input width is
/// hidden + input_dim. The output layer takes the last hidden output alone.
struct LayerShape {
  int in = 0;
  int out = 0;
  bool relu = false;
  bool norm = false;
  bool concat_input = false;  // input is [h_prev ; x]
};

std::vector<LayerShape> resolve_layers(const Architecture& arch);

/// gain (x - mean(x)) / sqrt(var(x) + eps) + shift, population variance.
Vec layer_norm_forward(const Vec& x, const Vec& gain, const Vec& shift,
                       double eps = kLayerNormEps);

struct ParamEntry {
  std::string name;
  int rows = 0;
  int cols = 0;   // 1 for vectors
  long offset = 0;
  long count() const { return static_cast<long>(rows) * cols; }
};

class BatchTape;
class TangentTape;

/// Dense feed-forward network with flat parameter storage. ReLU hidden
/// layers, identity output, optional layer normalization between the linear
/// transform and the nonlinearity, optional D2RL skip wiring.
///
/// Forward/backward come in batched form (samples are matrix columns);
/// single-sample calls wrap a one-column batch. Batched calls process one
/// contiguous block of a batch; callers split batches into blocks and
/// combine per-block gradients in block order (see parallel.hpp).
class DenseNet {
public:
  DenseNet() = default;
  explicit DenseNet(const Architecture& arch);

  const Architecture& arch() const { return arch_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  int input_dim() const { return arch_.input_dim; }
  int output_dim() const { return arch_.output_dim; }
  long param_count() const { return theta_.size(); }

  Vec& params() { return theta_; }
  const Vec& params() const { return theta_; }
  const std::vector<ParamEntry>& layout() const { return layout_; }

  /// Name of the parameter entry covering a flat index.
  std::string param_name_at(long flat_index) const;

  /// Kaiming-uniform fan-in init for weights (output layer additionally
  /// scaled by arch.final_init_scale), zero biases, unit gains, zero shifts.
  void init_params(Rng& rng);

  /// Tapes taken before this count changed are stale; backward refuses them.
  std::uint64_t params_version() const { return version_; }
  void mark_params_changed() { ++version_; }

  // ---- single sample ----
  Vec forward(const Vec& x, BatchTape* tape = nullptr) const;
  /// Accumulates parameter gradients into grad (size param_count) and
  /// returns dL/dx. Consumes the tape.
  Vec backward(BatchTape& tape, const Vec& dy, Vec& grad) const;

  // ---- batched (columns = samples) ----
  Mat forward_batch(const Mat& X, BatchTape* tape = nullptr) const;
  /// dY has one adjoint column per sample. Accumulates parameter gradients
  /// into *grad when non-null; returns dL/dX when want_dx (else an empty
  /// matrix). Does not consume the tape: some losses run a parameter pass
  /// and an input-gradient pass off one forward.
  Mat backward_batch(const BatchTape& tape, const Mat& dY, Vec* grad,
                     bool want_dx = false) const;

  // ---- forward-over-reverse, for losses that penalize input gradients ----
  /// Forward pass carrying an input-directional tangent per column:
  /// Ydot(:,i) = J(x_i) * V(:,i). Fills tape with both primal and tangent
  /// intermediates.
  void forward_tangent_batch(const Mat& X, const Mat& V,
                             TangentTape& tape) const;
  /// Adjoint of the joint (primal, tangent) computation: given dL/dY and
  /// dL/dYdot, accumulate dL/dparams into grad.
  void backward_tangent_batch(const TangentTape& tape, const Mat& gY,
                              const Mat& gYdot, Vec& grad) const;

private:
  friend class BatchTape;
  friend class TangentTape;

  Eigen::Map<const Mat> weight(int l) const;
  Eigen::Map<const Vec> bias(int l) const;
  Eigen::Map<const Vec> gain(int l) const;
  Eigen::Map<const Vec> shift(int l) const;

  Architecture arch_;
  std::vector<LayerShape> layers_;
  std::vector<ParamEntry> layout_;
  // per layer: index into layout_ of W, b (and gain, shift when norm)
  struct LayerParamIdx {
    int w = -1, b = -1, gain = -1, shift = -1;
  };
  std::vector<LayerParamIdx> pidx_;
  Vec theta_;
  std::uint64_t version_ = 0;
};

/// Cached intermediates of one forward block. A tape is bound to the net
/// and parameter version that produced it.
class BatchTape {
public:
  bool valid_for(const DenseNet& net) const {
    return net_ == &net && version_ == net.params_version() && !consumed_;
  }
  void invalidate() { consumed_ = true; }
  const Mat& input() const { return x_; }
  const Mat& output() const { return y_; }
  int batch() const { return static_cast<int>(x_.cols()); }

private:
  friend class DenseNet;
  struct LayerCache {
    Mat h_in;      // input to the linear transform (post-concat)
    Mat xhat;      // layer norm: normalized pre-activation
    RowVec rstd;   // layer norm: 1/sqrt(var + eps) per column
    Mat pre_act;   // value entering the nonlinearity
  };
  const DenseNet* net_ = nullptr;
  std::uint64_t version_ = 0;
  bool consumed_ = false;
  Mat x_, y_;
  std::vector<LayerCache> layers_;
};

/// Tape for the joint primal+tangent pass.
class TangentTape {
public:
  bool valid_for(const DenseNet& net) const {
    return net_ == &net && version_ == net.params_version();
  }
  const Mat& output() const { return y_; }
  const Mat& output_tangent() const { return ydot_; }

private:
  friend class DenseNet;
  struct LayerCache {
    Mat h_in, hdot_in;
    // layer norm intermediates (primal and tangent)
    Mat c;           // z - mean(z)
    RowVec rstd;     // 1/sqrt(var + eps)
    Mat xhat;        // c * rstd
    Mat cdot;
    RowVec vdot;
    RowVec rdot;
    Mat xhatdot;
    Mat pre_act;     // relu mask source
  };
  const DenseNet* net_ = nullptr;
  std::uint64_t version_ = 0;
  Mat x_, v_, y_, ydot_;
  std::vector<LayerCache> layers_;
};

}  // namespace nn
}  // namespace momo
