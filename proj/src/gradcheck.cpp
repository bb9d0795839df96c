#include "lfd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lfd/errors.hpp"

namespace lfd {

Tensor<double> finite_diff_gradient(const std::function<double()>& f, Tensor<double>& point,
                                    double epsilon) {
  Tensor<double> grad(point.shape());
  for (std::int64_t i = 0; i < point.numel(); ++i) {
    const double saved = point[i];
    point[i] = saved + epsilon;
    const double up = f();
    point[i] = saved - epsilon;
    const double down = f();
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

template <typename T>
GradComparison compare_with_finite_differences(const std::type_identity_t<std::function<T()>>& f,
                                               Tensor<T>& point,
                                               std::span<const double> analytic, T epsilon,
                                               double kink_tolerance) {
  if (static_cast<std::int64_t>(analytic.size()) != point.numel()) {
    throw DimensionError("gradient comparison: analytic size does not match point");
  }
  const std::size_t n = analytic.size();
  std::vector<T> d1(n), d2(n);
  for (std::int64_t i = 0; i < point.numel(); ++i) {
    const T saved = point[i];
    auto at = [&](T delta) {
      point[i] = saved + delta;
      return f();
    };
    const T p1 = at(epsilon), m1 = at(-epsilon), p2 = at(2 * epsilon), m2 = at(-2 * epsilon);
    point[i] = saved;
    d1[i] = (p1 - m1) / (2 * epsilon);
    d2[i] = (p2 - m2) / (4 * epsilon);
  }
  double max_numeric = 0.0;
  for (T v : d1) max_numeric = std::max(max_numeric, static_cast<double>(std::abs(v)));
  const double floor = std::max(1e-3 * max_numeric, 1e-12);

  GradComparison result;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = static_cast<double>(d1[i]), b = static_cast<double>(d2[i]);
    const double scale = std::max({std::abs(a), std::abs(b), floor});
    if (std::abs(a - b) > kink_tolerance * scale) {
      ++result.excluded;
      continue;
    }
    ++result.checked;
    const double numeric = static_cast<double>((4 * d1[i] - d2[i]) / 3);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[i] - numeric) / denom);
  }
  return result;
}

template GradComparison compare_with_finite_differences<double>(
    const std::function<double()>&, Tensor<double>&, std::span<const double>, double, double);
template GradComparison compare_with_finite_differences<long double>(
    const std::function<long double()>&, Tensor<long double>&, std::span<const double>,
    long double, double);

}  // namespace lfd
