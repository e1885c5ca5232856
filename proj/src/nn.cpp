#include "momo/nn.hpp"

#include <cmath>

namespace momo::nn {

std::vector<LayerShape> resolve_layers(const Architecture& arch) {
  require(arch.input_dim > 0, "Architecture: input_dim must be positive");
  require(arch.output_dim > 0, "Architecture: output_dim must be positive");
  for (int h : arch.hidden)
    require(h > 0, "Architecture: hidden widths must be positive");

  const int d = arch.input_dim;
  const bool d2rl = arch.mode == ArchMode::D2rl;
  std::vector<LayerShape> layers;
  layers.reserve(arch.hidden.size() + 1);
  int prev = d;
  for (size_t i = 0; i < arch.hidden.size(); ++i) {
    LayerShape ls;
    ls.concat_input = d2rl && i > 0;
    ls.in = ls.concat_input ? prev + d : prev;
    ls.out = arch.hidden[i];
    ls.relu = true;
    ls.norm = arch.layer_norm;
    layers.push_back(ls);
    prev = ls.out;
  }
  layers.push_back({prev, arch.output_dim, false, false, false});
  return layers;
}

Vec layer_norm_forward(const Vec& x, const Vec& gain, const Vec& shift,
                       double eps) {
  require(x.size() == gain.size() && x.size() == shift.size(),
          "layer_norm_forward: length mismatch");
  require(eps > 0, "layer_norm_forward: eps must be positive");
  const double mu = x.mean();
  const Vec c = x.array() - mu;
  const double var = c.squaredNorm() / static_cast<double>(x.size());
  const double rstd = 1.0 / std::sqrt(var + eps);
  return (gain.array() * c.array() * rstd + shift.array()).matrix();
}

DenseNet::DenseNet(const Architecture& arch)
    : arch_(arch), layers_(resolve_layers(arch)) {
  long off = 0;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& ls = layers_[l];
    const std::string p = "layer" + std::to_string(l);
    LayerParamIdx idx;
    idx.w = static_cast<int>(layout_.size());
    layout_.push_back({p + ".W", ls.out, ls.in, off});
    off += layout_.back().count();
    idx.b = static_cast<int>(layout_.size());
    layout_.push_back({p + ".b", ls.out, 1, off});
    off += layout_.back().count();
    if (ls.norm) {
      idx.gain = static_cast<int>(layout_.size());
      layout_.push_back({p + ".gain", ls.out, 1, off});
      off += layout_.back().count();
      idx.shift = static_cast<int>(layout_.size());
      layout_.push_back({p + ".shift", ls.out, 1, off});
      off += layout_.back().count();
    }
    pidx_.push_back(idx);
  }
  theta_ = Vec::Zero(off);
  // usable immediately as a zero net; init_params gives the real init
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].norm) {
      Eigen::Map<Vec>(theta_.data() + layout_[pidx_[l].gain].offset,
                      layers_[l].out)
          .setOnes();
    }
  }
}

Eigen::Map<const Mat> DenseNet::weight(int l) const {
  const auto& e = layout_[pidx_[l].w];
  return {theta_.data() + e.offset, e.rows, e.cols};
}
Eigen::Map<const Vec> DenseNet::bias(int l) const {
  const auto& e = layout_[pidx_[l].b];
  return {theta_.data() + e.offset, e.rows};
}
Eigen::Map<const Vec> DenseNet::gain(int l) const {
  const auto& e = layout_[pidx_[l].gain];
  return {theta_.data() + e.offset, e.rows};
}
Eigen::Map<const Vec> DenseNet::shift(int l) const {
  const auto& e = layout_[pidx_[l].shift];
  return {theta_.data() + e.offset, e.rows};
}

std::string DenseNet::param_name_at(long flat_index) const {
  for (const auto& e : layout_) {
    if (flat_index >= e.offset && flat_index < e.offset + e.count())
      return e.name;
  }
  return "<out of range>";
}

void DenseNet::init_params(Rng& rng) {
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& ls = layers_[l];
    const bool final_layer = l + 1 == layers_.size();
    double bound = std::sqrt(6.0 / ls.in);
    if (final_layer) bound *= arch_.final_init_scale;
    const auto& we = layout_[pidx_[l].w];
    double* w = theta_.data() + we.offset;
    for (long i = 0; i < we.count(); ++i) w[i] = rng.uniform(-bound, bound);
    Eigen::Map<Vec>(theta_.data() + layout_[pidx_[l].b].offset, ls.out)
        .setZero();
    if (ls.norm) {
      Eigen::Map<Vec>(theta_.data() + layout_[pidx_[l].gain].offset, ls.out)
          .setOnes();
      Eigen::Map<Vec>(theta_.data() + layout_[pidx_[l].shift].offset, ls.out)
          .setZero();
    }
  }
  mark_params_changed();
}

Mat DenseNet::forward_batch(const Mat& X, BatchTape* tape) const {
  require(X.rows() == arch_.input_dim,
          "DenseNet::forward_batch: input dimension mismatch");
  require(X.allFinite(), "DenseNet::forward_batch: non-finite input");
  const int nb = static_cast<int>(X.cols());
  const int L = static_cast<int>(layers_.size());

  if (tape) {
    tape->net_ = this;
    tape->version_ = version_;
    tape->consumed_ = false;
    tape->x_ = X;
    tape->layers_.assign(L, {});
  }

  Mat H = X;
  for (int l = 0; l < L; ++l) {
    const auto& ls = layers_[l];
    Mat h_in;
    if (ls.concat_input) {
      h_in.resize(ls.in, nb);
      h_in.topRows(H.rows()) = H;
      h_in.bottomRows(X.rows()) = X;
    } else {
      h_in = std::move(H);
    }
    Mat Z = (weight(l) * h_in).colwise() + bias(l);
    Mat P;
    RowVec rstd;
    Mat xhat;
    if (ls.norm) {
      RowVec mu = Z.colwise().mean();
      Mat C = Z.rowwise() - mu;
      RowVec var = C.array().square().colwise().mean().matrix();
      rstd = (var.array() + kLayerNormEps).sqrt().inverse().matrix();
      xhat = (C.array().rowwise() * rstd.array()).matrix();
      P = ((xhat.array().colwise() * gain(l).array()).colwise() +
           shift(l).array())
              .matrix();
    } else {
      P = std::move(Z);
    }
    H = ls.relu ? P.cwiseMax(0.0) : P;
    if (tape) {
      auto& c = tape->layers_[l];
      c.h_in = std::move(h_in);
      c.pre_act = std::move(P);
      if (ls.norm) {
        c.xhat = std::move(xhat);
        c.rstd = std::move(rstd);
      }
    }
  }
  if (tape) tape->y_ = H;
  return H;
}

Mat DenseNet::backward_batch(const BatchTape& tape, const Mat& dY, Vec* grad,
                             bool want_dx) const {
  require(tape.valid_for(*this),
          "DenseNet::backward_batch: tape is stale or from another net");
  require(dY.rows() == arch_.output_dim && dY.cols() == tape.x_.cols(),
          "DenseNet::backward_batch: adjoint shape mismatch");
  if (grad)
    require(grad->size() == theta_.size(),
            "DenseNet::backward_batch: gradient accumulator size mismatch");

  const int L = static_cast<int>(layers_.size());
  const int nb = static_cast<int>(tape.x_.cols());
  Mat dX;
  if (want_dx) dX = Mat::Zero(arch_.input_dim, nb);

  Mat G = dY;
  for (int l = L - 1; l >= 0; --l) {
    const auto& ls = layers_[l];
    const auto& c = tape.layers_[l];
    if (ls.relu) G = (c.pre_act.array() > 0.0).select(G, 0.0);
    Mat GZ;
    if (ls.norm) {
      if (grad) {
        const auto& ge = layout_[pidx_[l].gain];
        const auto& se = layout_[pidx_[l].shift];
        Eigen::Map<Vec>(grad->data() + ge.offset, ls.out) +=
            (G.array() * c.xhat.array()).rowwise().sum().matrix();
        Eigen::Map<Vec>(grad->data() + se.offset, ls.out) += G.rowwise().sum();
      }
      Mat GH = (G.array().colwise() * gain(l).array()).matrix();
      RowVec m1 = GH.colwise().mean();
      RowVec m2 = (GH.array() * c.xhat.array()).colwise().mean().matrix();
      GZ = (((GH.array().rowwise() - m1.array()) -
             c.xhat.array().rowwise() * m2.array())
                .rowwise() *
            c.rstd.array())
               .matrix();
    } else {
      GZ = std::move(G);
    }
    if (grad) {
      const auto& we = layout_[pidx_[l].w];
      const auto& be = layout_[pidx_[l].b];
      Eigen::Map<Mat>(grad->data() + we.offset, ls.out, ls.in).noalias() +=
          GZ * c.h_in.transpose();
      Eigen::Map<Vec>(grad->data() + be.offset, ls.out) += GZ.rowwise().sum();
    }
    const bool need_input_adjoint = l > 0 || want_dx;
    if (!need_input_adjoint) return dX;
    Mat Gin = weight(l).transpose() * GZ;
    if (ls.concat_input) {
      const int d = arch_.input_dim;
      if (want_dx) dX += Gin.bottomRows(d);
      G = Gin.topRows(ls.in - d);
    } else {
      G = std::move(Gin);
    }
  }
  if (want_dx) dX += G;
  (void)nb;
  return dX;
}

Vec DenseNet::forward(const Vec& x, BatchTape* tape) const {
  return forward_batch(x, tape).col(0);
}

Vec DenseNet::backward(BatchTape& tape, const Vec& dy, Vec& grad) const {
  Mat dX = backward_batch(tape, dy, &grad, true);
  tape.invalidate();
  return dX.col(0);
}

void DenseNet::forward_tangent_batch(const Mat& X, const Mat& V,
                                     TangentTape& tape) const {
  require(X.rows() == arch_.input_dim && V.rows() == X.rows() &&
              V.cols() == X.cols(),
          "DenseNet::forward_tangent_batch: shape mismatch");
  const int nb = static_cast<int>(X.cols());
  const int L = static_cast<int>(layers_.size());
  tape.net_ = this;
  tape.version_ = version_;
  tape.x_ = X;
  tape.v_ = V;
  tape.layers_.assign(L, {});

  Mat H = X, Hd = V;
  for (int l = 0; l < L; ++l) {
    const auto& ls = layers_[l];
    auto& c = tape.layers_[l];
    if (ls.concat_input) {
      Mat h_in(ls.in, nb), hdot_in(ls.in, nb);
      h_in.topRows(H.rows()) = H;
      h_in.bottomRows(X.rows()) = X;
      hdot_in.topRows(Hd.rows()) = Hd;
      hdot_in.bottomRows(V.rows()) = V;
      c.h_in = std::move(h_in);
      c.hdot_in = std::move(hdot_in);
    } else {
      c.h_in = std::move(H);
      c.hdot_in = std::move(Hd);
    }
    Mat Z = (weight(l) * c.h_in).colwise() + bias(l);
    Mat Zd = weight(l) * c.hdot_in;
    Mat P, Pd;
    if (ls.norm) {
      const double n = ls.out;
      RowVec mu = Z.colwise().mean();
      c.c = Z.rowwise() - mu;
      RowVec var = c.c.array().square().colwise().mean().matrix();
      c.rstd = (var.array() + kLayerNormEps).sqrt().inverse().matrix();
      c.xhat = (c.c.array().rowwise() * c.rstd.array()).matrix();
      RowVec mud = Zd.colwise().mean();
      c.cdot = Zd.rowwise() - mud;
      c.vdot =
          (2.0 / n * (c.c.array() * c.cdot.array()).colwise().sum()).matrix();
      c.rdot = (-0.5 * c.rstd.array().cube() * c.vdot.array()).matrix();
      c.xhatdot = (c.cdot.array().rowwise() * c.rstd.array() +
                   c.c.array().rowwise() * c.rdot.array())
                      .matrix();
      P = ((c.xhat.array().colwise() * gain(l).array()).colwise() +
           shift(l).array())
              .matrix();
      Pd = (c.xhatdot.array().colwise() * gain(l).array()).matrix();
    } else {
      P = std::move(Z);
      Pd = std::move(Zd);
    }
    if (ls.relu) {
      H = P.cwiseMax(0.0);
      Hd = (P.array() > 0.0).select(Pd, 0.0);
    } else {
      H = P;
      Hd = Pd;
    }
    c.pre_act = std::move(P);
  }
  tape.y_ = H;
  tape.ydot_ = Hd;
}

void DenseNet::backward_tangent_batch(const TangentTape& tape, const Mat& gY,
                                      const Mat& gYdot, Vec& grad) const {
  require(tape.valid_for(*this),
          "DenseNet::backward_tangent_batch: tape is stale");
  require(grad.size() == theta_.size(),
          "DenseNet::backward_tangent_batch: gradient accumulator mismatch");
  const int L = static_cast<int>(layers_.size());

  Mat G = gY, Gd = gYdot;
  for (int l = L - 1; l >= 0; --l) {
    const auto& ls = layers_[l];
    const auto& c = tape.layers_[l];
    Mat gP, gPd;
    if (ls.relu) {
      auto mask = c.pre_act.array() > 0.0;
      gP = mask.select(G, 0.0);
      gPd = mask.select(Gd, 0.0);
    } else {
      gP = std::move(G);
      gPd = std::move(Gd);
    }
    Mat gZ, gZd;
    if (ls.norm) {
      const double n = ls.out;
      const auto& ge = layout_[pidx_[l].gain];
      const auto& se = layout_[pidx_[l].shift];
      Eigen::Map<Vec>(grad.data() + ge.offset, ls.out) +=
          (gP.array() * c.xhat.array() + gPd.array() * c.xhatdot.array())
              .rowwise()
              .sum()
              .matrix();
      Eigen::Map<Vec>(grad.data() + se.offset, ls.out) += gP.rowwise().sum();

      Mat GX = (gP.array().colwise() * gain(l).array()).matrix();
      Mat GXd = (gPd.array().colwise() * gain(l).array()).matrix();
      // xhatdot = cdot*rstd + c*rdot
      Mat gCd = (GXd.array().rowwise() * c.rstd.array()).matrix();
      RowVec gRd = (GXd.array() * c.c.array()).colwise().sum().matrix();
      Mat gC = (GXd.array().rowwise() * c.rdot.array()).matrix();
      RowVec gR = (GXd.array() * c.cdot.array()).colwise().sum().matrix();
      // xhat = c*rstd
      gC += (GX.array().rowwise() * c.rstd.array()).matrix();
      gR += (GX.array() * c.c.array()).colwise().sum().matrix();
      // rdot = -1/2 rstd^3 vdot
      gR += (gRd.array() * (-1.5) * c.rstd.array().square() * c.vdot.array())
                .matrix();
      RowVec gVd = (gRd.array() * (-0.5) * c.rstd.array().cube()).matrix();
      // vdot = 2/n sum(c .* cdot)
      gC += (2.0 / n * (c.cdot.array().rowwise() * gVd.array())).matrix();
      gCd += (2.0 / n * (c.c.array().rowwise() * gVd.array())).matrix();
      // rstd = (v + eps)^{-1/2}
      RowVec gV = (gR.array() * (-0.5) * c.rstd.array().cube()).matrix();
      // v = 1/n sum(c^2)
      gC += (2.0 / n * (c.c.array().rowwise() * gV.array())).matrix();
      // c = z - mean(z), cdot = zdot - mean(zdot)
      gZd = gCd.rowwise() - gCd.colwise().mean();
      gZ = gC.rowwise() - gC.colwise().mean();
    } else {
      gZ = std::move(gP);
      gZd = std::move(gPd);
    }
    const auto& we = layout_[pidx_[l].w];
    const auto& be = layout_[pidx_[l].b];
    Eigen::Map<Mat> gW(grad.data() + we.offset, ls.out, ls.in);
    gW.noalias() += gZ * c.h_in.transpose();
    gW.noalias() += gZd * c.hdot_in.transpose();
    Eigen::Map<Vec>(grad.data() + be.offset, ls.out) += gZ.rowwise().sum();
    if (l == 0) break;
    Mat Gin = weight(l).transpose() * gZ;
    Mat Gdin = weight(l).transpose() * gZd;
    if (ls.concat_input) {
      const int d = arch_.input_dim;
      G = Gin.topRows(ls.in - d);
      Gd = Gdin.topRows(ls.in - d);
    } else {
      G = std::move(Gin);
      Gd = std::move(Gdin);
    }
  }
}

}  // namespace momo::nn
