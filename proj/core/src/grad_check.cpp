#include "percdia/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace percdia {

GradCheckReport grad_check(const std::function<Tensor()>& f, ParamStore& params, double h,
                           int64_t max_coords_per_tensor, uint64_t seed) {
  // Analytic pass.
  params.zero_grads();
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  params.for_each([&](const std::string& name, Tensor& p) {
    if (!p.requires_grad()) return;
    const int64_t n = p.size();
    std::vector<int64_t> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (n > max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(max_coords_per_tensor));
    }
    std::span<double> vals = p.raw();
    // untouched by f: analytic gradient is identically zero
    std::span<const double> grad =
        p.has_grad() ? p.grad() : std::span<const double>();
    for (int64_t idx : coords) {
      const double orig = vals[static_cast<size_t>(idx)];
      vals[static_cast<size_t>(idx)] = orig + h;
      const double fp = f().item();
      vals[static_cast<size_t>(idx)] = orig - h;
      const double fm = f().item();
      vals[static_cast<size_t>(idx)] = orig;

      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = grad.empty() ? 0.0 : grad[static_cast<size_t>(idx)];
      // The 0.1 floor turns the bound into |a-n| <= tol*max(|a|,|n|) with an
      // absolute tolerance of tol/10 for near-zero coordinates, which is what
      // central differences at h=1e-6 can actually resolve on a composed loss.
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 0.1});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = idx;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  });
  return report;
}

}  // namespace percdia
