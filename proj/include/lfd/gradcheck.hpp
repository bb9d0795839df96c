#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>

#include "lfd/tensor.hpp"

namespace lfd {

// Central differences (f(x+εe_i) - f(x-εe_i)) / 2ε for every element of
// `point`. The point is perturbed in place and restored afterwards.
Tensor<double> finite_diff_gradient(const std::function<double()>& f, Tensor<double>& point,
                                    double epsilon = 1e-6);

struct GradComparison {
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  std::int64_t excluded = 0;  // elements sitting on a kink (ReLU zero, pool tie)
};

// Compares an analytic gradient with the Richardson-extrapolated central
// difference (4·D(ε) - D(2ε)) / 3, D(h) = (f(x+h) - f(x-h)) / 2h, element by
// element. The relative error of element i is |a_i - n_i| / max(|a_i|, |n_i|,
// floor), where floor = 1e-3 * max_j |D_j(ε)| keeps rounding noise in
// near-zero entries from dominating. Elements whose D(ε) and D(2ε) disagree by
// more than `kink_tolerance` (relative) straddle a kink (ReLU zero, pool tie)
// and are counted as excluded, not checked. The point and f may use a wider
// type than the analytic gradient to lower the rounding noise of the oracle.
template <typename T>
GradComparison compare_with_finite_differences(const std::type_identity_t<std::function<T()>>& f,
                                               Tensor<T>& point,
                                               std::span<const double> analytic,
                                               T epsilon = T(1e-6),
                                               double kink_tolerance = 1e-6);

}  // namespace lfd
