#pragma once

#include <functional>

#include "momo/nn.hpp"

namespace momo::nn {

struct FdReport {
  bool pass = false;
  double max_rel_err = 0.0;
  long worst_index = -1;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  long checked = 0;
};

/// Central-difference check of an analytic gradient against a loss closure
/// evaluated at perturbed parameters. The closure must recompute the loss
/// from the net's current parameters on every call. Relative error per
/// component is |a - f| / max(|a|, |f|, 1e-3); pass iff the max over all
/// components is below tol.
FdReport finite_difference_check(DenseNet& net,
                                 const std::function<double()>& loss_value,
                                 const Vec& analytic_grad, double tol,
                                 double step = 1e-4);

}  // namespace momo::nn
