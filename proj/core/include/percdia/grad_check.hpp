#pragma once

#include <functional>

#include "percdia/params.hpp"
#include "percdia/tensor.hpp"

namespace percdia {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t coords_checked = 0;
};

// Compares reverse-mode gradients of f() against central finite differences.
// f must be deterministic and rebuild the loss from the current parameter
// values on every call. Tensors larger than max_coords_per_tensor are sampled
// (uniformly, from `seed`), never below that many coordinates.
// Relative error uses denominator max(|analytic|, |numeric|, 0.1), i.e. an
// absolute tolerance of tol/10 for near-zero coordinates.
GradCheckReport grad_check(const std::function<Tensor()>& f, ParamStore& params,
                           double h = 1e-6, int64_t max_coords_per_tensor = 100,
                           uint64_t seed = 0);

}  // namespace percdia
