#pragma once

// Central finite-difference oracle for reverse-mode gradients, run in 64-bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tsam/ad/tensor.hpp"

namespace tsam::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor index>[<element>]"
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// coordinates whose true gradient is ~0 from turning round-off into a
// relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() gradients of `loss` against central differences
/// (step h) for every element of `leaves` (or a random subset of at most
/// `max_per_tensor` elements per tensor when nonzero).
inline GradCheckResult grad_check(const std::function<ad::Tensor<double>()>& loss,
                                  std::vector<ad::Tensor<double>> leaves, double h = 1e-4,
                                  std::size_t max_per_tensor = 0, unsigned seed = 1) {
  for (auto& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  ad::backward(loss());
  GradCheckResult result;
  std::mt19937 rng(seed);
  for (std::size_t ti = 0; ti < leaves.size(); ++ti) {
    auto& t = leaves[ti];
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> coords(t.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_per_tensor && coords.size() > max_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_per_tensor);
    }
    for (std::size_t i : coords) {
      auto data = t.mutable_data();
      const double orig = data[i];
      data[i] = orig + h;
      const double up = loss().item();
      data[i] = orig - h;
      const double down = loss().item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[i], numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = std::to_string(ti) + "[" + std::to_string(i) + "] analytic=" +
                       std::to_string(analytic[i]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

inline ad::Tensor<double> random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> data(ad::element_count(shape));
  for (auto& x : data) x = u(rng);
  return ad::Tensor<double>(std::move(shape), std::move(data), true);
}

}  // namespace tsam::testing
