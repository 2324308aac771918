#pragma once

#include <random>

namespace percdia {

// Forward-pass mode. Evaluation (default) disables dropout; training draws
// dropout masks from `rng` so runs are reproducible from the run seed.
struct PassMode {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  bool training() const { return rng != nullptr && dropout > 0.0; }
  static PassMode eval() { return {}; }
  static PassMode train(double dropout, std::mt19937_64& rng) { return {dropout, &rng}; }
};

}  // namespace percdia
