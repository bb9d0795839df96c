#include "lfd/gradcheck_suite.hpp"

#include <doctest.h>

#include <string>

using namespace lfd;

TEST_CASE("gradient check suite passes every op and the composed network") {
  const auto report = run_gradcheck_suite(1);
  for (const auto& c : report.cases) {
    INFO(c.name << " max_rel_error=" << c.result.max_rel_error << " checked=" << c.result.checked
                << " excluded=" << c.result.excluded);
    CHECK(c.passed);
    CHECK(c.result.max_rel_error <= 1e-6);
    CHECK(c.result.checked > 0);
  }
  CHECK(report.passed);
  CHECK(report.seconds < 60.0);
  MESSAGE(report.cases.size() << " cases in " << report.seconds << " s");

  auto has = [&](const std::string& name) {
    for (const auto& c : report.cases)
      if (c.name == name) return true;
    return false;
  };
  for (const char* name :
       {"conv2d_valid/input", "conv2d_valid/weight", "conv2d_valid/bias", "maxpool2d/input",
        "relu/input", "batchnorm2d_train/input", "batchnorm2d_train/gamma",
        "batchnorm2d_train/beta", "batchnorm2d_eval/input", "batchnorm2d_eval/gamma",
        "batchnorm2d_eval/beta", "global_avg_pool/input", "affine/input", "affine/weight",
        "affine/bias", "cross_entropy/logits", "network/input"}) {
    CHECK_MESSAGE(has(name), name);
  }
  std::size_t network = 0;
  for (const auto& c : report.cases) network += c.name.rfind("network/", 0) == 0;
  // 8 conv blocks × (weight, bias, gamma, beta) + seg head (2) + image head (2) + input.
  CHECK(network == 8 * 4 + 2 + 2 + 1);
}
