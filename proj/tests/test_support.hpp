#pragma once

// Shared helpers for the suites: the central-difference gradient-checking
// harness and seam-avoiding samplers. These stay independent of the
// backward rules they are used to check.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fplus/tensor.hpp"

namespace fplus::testing {

// N(0,1) draw avoiding |x| < margin (keeps probes away from kinks).
inline double normal_away_from(std::mt19937_64& rng, double margin = 1e-4) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double x = normal(rng);
  while (std::abs(x) < margin) x = normal(rng);
  return x;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Rebuilds the loss from the builder for every +-h probe of every element
// of every leaf, and compares the central difference against the recorded
// autodiff gradient with the relative metric |ad - cd| / max(1, |cd|).
inline GradCheckResult gradcheck(const std::function<Tensor()>& build_loss,
                                 std::vector<Tensor> leaves, double h = 1e-6) {
  for (Tensor& leaf : leaves) leaf.zero_grad();
  Tensor loss = build_loss();
  backward(loss);

  GradCheckResult result;
  for (Tensor& leaf : leaves) {
    const std::vector<double> ad(leaf.grad().begin(), leaf.grad().end());
    auto values = leaf.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = build_loss().item();
      values[i] = saved - h;
      const double down = build_loss().item();
      values[i] = saved;
      const double cd = (up - down) / (2.0 * h);
      const double err = std::abs(ad[i] - cd) / std::max(1.0, std::abs(cd));
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace fplus::testing
