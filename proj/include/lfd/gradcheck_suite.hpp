#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfd/gradcheck.hpp"

namespace lfd {

struct GradcheckCase {
  std::string name;  // "<op>/<argument>"
  GradComparison result;
  bool passed = false;
};

struct GradcheckReport {
  double tolerance = 1e-6;
  std::vector<GradcheckCase> cases;
  double seconds = 0.0;
  bool passed = false;
};

// 64-bit reverse-mode gradients against central differences for every op
// argument and for the joint loss of a reduced-width network with the default
// layer stack. ReLU and max-pool inputs are spread apart so that no
// perturbation crosses a kink; kinks inside the composed network are excluded
// by the one-sided difference test.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-6);

}  // namespace lfd
