#include "momo/fd_check.hpp"

#include <cmath>

namespace momo::nn {

FdReport finite_difference_check(DenseNet& net,
                                 const std::function<double()>& loss_value,
                                 const Vec& analytic_grad, double tol,
                                 double step) {
  require(analytic_grad.size() == net.param_count(),
          "finite_difference_check: gradient size mismatch");
  require(step > 0 && tol > 0, "finite_difference_check: step/tol positive");

  FdReport rep;
  Vec& theta = net.params();
  const long n = theta.size();
  for (long i = 0; i < n; ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    net.mark_params_changed();
    const double lp = loss_value();
    theta[i] = saved - step;
    net.mark_params_changed();
    const double lm = loss_value();
    theta[i] = saved;
    net.mark_params_changed();

    const double fd = (lp - lm) / (2.0 * step);
    const double a = analytic_grad[i];
    const double rel =
        std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
    ++rep.checked;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
      rep.worst_param = net.param_name_at(i);
      rep.worst_analytic = a;
      rep.worst_numeric = fd;
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace momo::nn
