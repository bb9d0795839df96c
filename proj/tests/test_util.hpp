#pragma once

#include <random>

#include "lfd/tensor.hpp"

namespace lfd::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

// Distinct values with pairwise gaps >= `gap`, in random order, so max/ReLU
// decisions are stable under finite-difference perturbations.
inline Tensor<double> spaced_tensor(Shape shape, std::mt19937_64& rng, double gap = 0.05) {
  Tensor<double> t(std::move(shape));
  const auto n = t.numel();
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) vals[i] = (static_cast<double>(i) - n / 2.0 + 0.3) * gap;
  std::shuffle(vals.begin(), vals.end(), rng);
  for (std::int64_t i = 0; i < n; ++i) t[i] = vals[i];
  return t;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace lfd::testing
