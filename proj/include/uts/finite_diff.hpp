#pragma once

// Central-difference gradient checking. The analytic gradient under test is
// produced by the tape; the reference here only ever calls the forward pass,
// so the two paths share no derivative code.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uts/tensor.hpp"

namespace uts {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_tensor = -1;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string describe() const {
    return "max rel err " + std::to_string(max_rel_err) + " at tensor " +
           std::to_string(worst_tensor) + " element " + std::to_string(worst_index) +
           " (analytic " + std::to_string(worst_analytic) + ", numeric " +
           std::to_string(worst_numeric) + ")";
  }
};

// loss_fn re-runs the forward pass from scratch on the given tensors.
// analytic[i] must be the gradient of loss w.r.t. params[i].
inline GradCheckReport gradient_check(
    const std::function<double(const std::vector<Tensor>&)>& loss_fn, std::vector<Tensor> params,
    const std::vector<Tensor>& analytic, double h = 1e-4) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("gradient_check: params/analytic count mismatch");
  GradCheckReport rep;
  for (size_t ti = 0; ti < params.size(); ++ti) {
    require_same_shape(params[ti], analytic[ti], "gradient_check");
    for (size_t ei = 0; ei < params[ti].data.size(); ++ei) {
      const double saved = params[ti].data[ei];
      params[ti].data[ei] = saved + h;
      const double fp = loss_fn(params);
      params[ti].data[ei] = saved - h;
      const double fm = loss_fn(params);
      params[ti].data[ei] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = analytic[ti].data[ei];
      const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-6});
      const double rel = std::fabs(fd - ad) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_tensor = static_cast<int>(ti);
        rep.worst_index = static_cast<int64_t>(ei);
        rep.worst_analytic = ad;
        rep.worst_numeric = fd;
      }
    }
  }
  return rep;
}

}  // namespace uts
