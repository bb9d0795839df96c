#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "lfd/errors.hpp"
#include "lfd/gradcheck.hpp"
#include "lfd/ops.hpp"
#include "test_util.hpp"

using namespace lfd;
using lfd::testing::max_rel_diff;
using lfd::testing::random_tensor;
using lfd::testing::spaced_tensor;

namespace {

// Direct six-nested-loop cross-correlation.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                          const Tensor<double>& b) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto o = w.dim(0), k = w.dim(2);
  const auto oh = h - k + 1, ow = wd - k + 1;
  Tensor<double> y(Shape{n, o, oh, ow});
  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t io = 0; io < o; ++io)
      for (std::int64_t r = 0; r < oh; ++r)
        for (std::int64_t s = 0; s < ow; ++s) {
          double acc = b[io];
          for (std::int64_t ic = 0; ic < c; ++ic)
            for (std::int64_t ky = 0; ky < k; ++ky)
              for (std::int64_t kx = 0; kx < k; ++kx)
                acc += x[((in * c + ic) * h + r + ky) * wd + s + kx] *
                       w[((io * c + ic) * k + ky) * k + kx];
          y[((in * o + io) * oh + r) * ow + s] = acc;
        }
  return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

// Checks d/dX <proj, op(X)> for one argument X of a unary view of the op.
template <typename Op>
GradComparison check_op_gradient(Op op, Tensor<double>& wrt, std::mt19937_64& rng) {
  auto probe = op(nullptr);
  auto proj = random_tensor<double>(probe.shape(), rng);
  auto f = [&] { return dot(op(nullptr), proj); };

  wrt.set_requires_grad(true);
  wrt.zero_grad();
  Tape<double> tape;
  auto y = op(&tape);
  backward(y, std::span<const double>(proj.values()), tape);
  std::vector<double> analytic(wrt.grad().begin(), wrt.grad().end());
  return compare_with_finite_differences(f, wrt, analytic);
}

}  // namespace

TEST_CASE("tensor construction and invariants") {
  Tensor<float> t(Shape{2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.values()[5] == 1.5f);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  CHECK(t.grad().size() == 6);
  auto c = t.clone();
  c[0] = 7.f;
  CHECK(t[0] == 1.5f);
}

TEST_CASE("conv2d_valid examples") {
  std::mt19937_64 rng(1);
  SUBCASE("identity 1x1 kernel") {
    auto x = random_tensor<float>(Shape{1, 1, 3, 3}, rng);
    Tensor<float> w(Shape{1, 1, 1, 1}, 1.f), b(Shape{1}, 0.f);
    auto y = conv2d_valid(x, w, b);
    CHECK(y.shape() == x.shape());
    for (int i = 0; i < 9; ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("all-ones 3x3 plus bias") {
    Tensor<float> x(Shape{1, 1, 3, 3}, 1.f), w(Shape{1, 1, 3, 3}, 1.f), b(Shape{1}, 0.5f);
    auto y = conv2d_valid(x, w, b);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(9.5f));
  }
  SUBCASE("random case vs naive loops") {
    auto x = random_tensor<double>(Shape{2, 3, 8, 8}, rng);
    auto w = random_tensor<double>(Shape{4, 3, 3, 3}, rng);
    auto b = random_tensor<double>(Shape{4}, rng);
    auto y = conv2d_valid(x, w, b);
    auto ref = naive_conv(x, w, b);
    CHECK(y.shape() == Shape{2, 4, 6, 6});
    CHECK(max_rel_diff(y.values(), ref.values()) <= 1e-6);
  }
  SUBCASE("shape errors") {
    Tensor<float> x(Shape{1, 2, 4, 4}), w(Shape{1, 3, 3, 3}), b(Shape{1});
    CHECK_THROWS_AS(conv2d_valid(x, w, b), DimensionError);
    Tensor<float> w5(Shape{1, 2, 5, 5});
    CHECK_THROWS_AS(conv2d_valid(x, w5, b), DimensionError);
  }
}

TEST_CASE("conv2d_valid matches the naive oracle on 100 random cases") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ext(1, 4), k(1, 3), sp(0, 6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int kk = k(rng);
    auto x = random_tensor<double>(Shape{ext(rng), ext(rng), kk + sp(rng), kk + sp(rng)}, rng);
    auto w = random_tensor<double>(Shape{ext(rng), x.dim(1), kk, kk}, rng);
    auto b = random_tensor<double>(Shape{w.dim(0)}, rng);
    worst = std::max(worst, max_rel_diff(conv2d_valid(x, w, b).values(),
                                         naive_conv(x, w, b).values()));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("maxpool2d examples") {
  Tensor<float> x(Shape{1, 1, 4, 4});
  std::iota(x.values().begin(), x.values().end(), 0.f);
  auto y = maxpool2d(x, 2, 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(std::vector<float>(y.values().begin(), y.values().end()) ==
        std::vector<float>{5, 7, 13, 15});

  Tensor<float> c(Shape{1, 2, 5, 5}, 3.f);
  auto yc = maxpool2d(c, 3, 2);
  CHECK(yc.shape() == Shape{1, 2, 2, 2});
  for (auto v : yc.values()) CHECK(v == 3.f);

  Tensor<float> big(Shape{1, 1, 126, 126});
  CHECK(maxpool2d(big, 3, 2).shape() == Shape{1, 1, 62, 62});
  CHECK_THROWS_AS(maxpool2d(Tensor<float>(Shape{1, 1, 2, 2}), 3, 2), DimensionError);
}

TEST_CASE("maxpool2d routes ties to the first maximum") {
  Tensor<double> x(Shape{1, 1, 2, 2}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  auto y = maxpool2d(x, 2, 2, &tape);
  backward(y, tape);
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("relu examples") {
  Tensor<float> x(Shape{3}, std::vector<float>{-1, 0, 2});
  auto y = relu(x);
  CHECK(y[0] == 0.f);
  CHECK(y[1] == 0.f);
  CHECK(y[2] == 2.f);
  auto zeros = relu(Tensor<float>(Shape{4}, -2.f));
  for (auto v : zeros.values()) CHECK(v == 0.f);

  // Subgradient at zero is zero.
  Tensor<double> z(Shape{1}, 0.0);
  z.set_requires_grad(true);
  Tape<double> tape;
  auto r = relu(z, &tape);
  backward(r, tape);
  CHECK(z.grad()[0] == 0.0);
}

TEST_CASE("batchnorm2d train mode normalizes per channel") {
  std::mt19937_64 rng(3);
  auto x = random_tensor<double>(Shape{4, 3, 5, 5}, rng, -3.0, 5.0);
  BatchNormState<double> st(3);
  auto y = batchnorm2d(x, st, Mode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    int cnt = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        const double v = y[(n * 3 + c) * 25 + i];
        sum += v;
        sq += v * v;
        ++cnt;
      }
    const double mean = sum / cnt;
    CHECK(std::abs(mean) <= 1e-5);
    CHECK(std::abs(sq / cnt - mean * mean - 1.0) <= 1e-4);
  }
  // Running stats moved by momentum 0.1 from (0, 1).
  double m0 = 0;
  for (int n = 0; n < 4; ++n)
    for (int i = 0; i < 25; ++i) m0 += x[(n * 3) * 25 + i];
  CHECK(st.running_mean[0] == doctest::Approx(0.1 * m0 / 100.0));
  for (auto v : st.running_var) CHECK(v >= 0.0);
}

TEST_CASE("batchnorm2d eval mode uses running stats") {
  std::mt19937_64 rng(4);
  auto x = random_tensor<float>(Shape{2, 2, 3, 3}, rng);
  BatchNormState<float> st(2);
  auto y = batchnorm2d(x, st, Mode::kEval);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y[i] == doctest::Approx(x[i] / std::sqrt(1.0f + 1e-5f)).epsilon(1e-6));
  }
  CHECK(st.running_mean[0] == 0.f);
  BatchNormState<float> wrong(3);
  CHECK_THROWS_AS(batchnorm2d(x, wrong, Mode::kEval), DimensionError);
}

TEST_CASE("global_avg_pool and affine") {
  std::mt19937_64 rng(5);
  Tensor<float> c(Shape{1, 2, 3, 3}, 2.5f);
  auto g = global_avg_pool(c);
  CHECK(g.shape() == Shape{1, 2});
  CHECK(g[0] == doctest::Approx(2.5f));

  auto one = random_tensor<float>(Shape{2, 3, 1, 1}, rng);
  auto g1 = global_avg_pool(one);
  for (int i = 0; i < 6; ++i) CHECK(g1[i] == one[i]);

  auto r = random_tensor<double>(Shape{2, 3, 4, 5}, rng);
  auto gr = global_avg_pool(r);
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 20; ++j) s += r[i * 20 + j];
    CHECK(gr[i] == doctest::Approx(s / 20).epsilon(1e-12));
  }

  auto x = random_tensor<double>(Shape{3, 4}, rng);
  Tensor<double> eye(Shape{4, 4}, 0.0), zb(Shape{4}, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  auto ident = affine(x, eye, zb);
  for (int i = 0; i < 12; ++i) CHECK(ident[i] == x[i]);

  Tensor<double> zw(Shape{2, 4}, 0.0), b2(Shape{2}, std::vector<double>{0.5, -1.0});
  auto bias_only = affine(x, zw, b2);
  for (int n = 0; n < 3; ++n) {
    CHECK(bias_only[n * 2] == 0.5);
    CHECK(bias_only[n * 2 + 1] == -1.0);
  }

  auto w = random_tensor<double>(Shape{2, 4}, rng);
  auto y = affine(x, w, b2);
  for (int n = 0; n < 3; ++n)
    for (int k = 0; k < 2; ++k) {
      double acc = b2[k];
      for (int j = 0; j < 4; ++j) acc += x[n * 4 + j] * w[k * 4 + j];
      CHECK(y[n * 2 + k] == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS_AS(affine(x, Tensor<double>(Shape{2, 3}), b2), DimensionError);
}

TEST_CASE("softmax examples and normalization property") {
  auto p = softmax(Tensor<double>(Shape{1, 2}, std::vector<double>{0, 0}), 1);
  CHECK(p[0] == doctest::Approx(0.5));
  auto q = softmax(Tensor<double>(Shape{1, 2}, std::vector<double>{std::log(1.0), std::log(3.0)}), 1);
  CHECK(q[0] == doctest::Approx(0.25));
  CHECK(q[1] == doctest::Approx(0.75));
  auto big = softmax(Tensor<float>(Shape{2}, std::vector<float>{1000.f, 1000.f}), 0);
  CHECK(big[0] == doctest::Approx(0.5f));
  CHECK(big[1] == doctest::Approx(0.5f));

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor<float>(Shape{2, 3, 4}, rng, -50.0, 50.0);
    auto s = softmax(x, 1);
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 4; ++c) {
        double sum = 0;
        for (int j = 0; j < 3; ++j) {
          const float v = s[(a * 3 + j) * 4 + c];
          CHECK(v >= 0.f);
          CHECK(v <= 1.f);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
      }
  }
}

TEST_CASE("cross_entropy examples") {
  const std::int32_t one[] = {1};
  auto l = cross_entropy(Tensor<double>(Shape{1, 2}, std::vector<double>{0, std::log(3.0)}), one);
  CHECK(l.item() == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(l.item() == doctest::Approx(0.287682).epsilon(1e-6));

  const std::int32_t zero[] = {0};
  auto eq = cross_entropy(Tensor<double>(Shape{1, 2}, std::vector<double>{2, 2}), zero);
  CHECK(eq.item() == doctest::Approx(std::log(2.0)));

  const std::int32_t two[] = {0, 1};
  auto pair = cross_entropy(Tensor<double>(Shape{2, 2}, std::vector<double>{0, std::log(3.0), 1, 1}), two);
  CHECK(pair.item() == doctest::Approx((-std::log(0.25) + std::log(2.0)) / 2.0));

  const std::int32_t bad[] = {2};
  CHECK_THROWS_AS(cross_entropy(Tensor<double>(Shape{1, 2}), bad), DimensionError);
  CHECK_THROWS_AS(cross_entropy(Tensor<double>(Shape{2, 2}), one), DimensionError);
}

TEST_CASE("backward contract") {
  Tensor<double> v(Shape{2});
  Tape<double> tape;
  CHECK_THROWS_AS(backward(v, tape), ContractError);
}

TEST_CASE("finite_diff_gradient examples") {
  Tensor<double> x(Shape{2}, std::vector<double>{1, 2});
  auto g = finite_diff_gradient([&] { return x[0] * x[0] + x[1] * x[1]; }, x);
  CHECK(std::abs(g[0] - 2.0) <= 1e-8);
  CHECK(std::abs(g[1] - 4.0) <= 1e-8);
  auto z = finite_diff_gradient([] { return 3.0; }, x);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
  CHECK(x[0] == 1.0);
}

TEST_CASE("reverse-mode gradients match central differences") {
  std::mt19937_64 rng(11);
  constexpr double kTol = 1e-6;

  SUBCASE("conv2d_valid") {
    auto x = random_tensor<double>(Shape{2, 2, 5, 5}, rng);
    auto w = random_tensor<double>(Shape{3, 2, 3, 3}, rng);
    auto b = random_tensor<double>(Shape{3}, rng);
    auto op = [&](Tape<double>* t) { return conv2d_valid(x, w, b, t); };
    CHECK(check_op_gradient(op, x, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(op, w, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(op, b, rng).max_rel_error <= kTol);
  }
  SUBCASE("pointwise conv") {
    auto x = random_tensor<double>(Shape{2, 3, 3, 4}, rng);
    auto w = random_tensor<double>(Shape{2, 3, 1, 1}, rng);
    auto b = random_tensor<double>(Shape{2}, rng);
    auto op = [&](Tape<double>* t) { return conv2d_valid(x, w, b, t); };
    CHECK(check_op_gradient(op, x, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(op, w, rng).max_rel_error <= kTol);
  }
  SUBCASE("maxpool2d away from ties") {
    auto x = spaced_tensor(Shape{2, 2, 7, 7}, rng);
    auto op = [&](Tape<double>* t) { return maxpool2d(x, 3, 2, t); };
    auto r = check_op_gradient(op, x, rng);
    CHECK(r.max_rel_error <= kTol);
    CHECK(r.excluded == 0);
  }
  SUBCASE("relu away from zero") {
    auto x = spaced_tensor(Shape{3, 7}, rng);
    auto op = [&](Tape<double>* t) { return relu(x, t); };
    auto r = check_op_gradient(op, x, rng);
    CHECK(r.max_rel_error <= kTol);
    CHECK(r.excluded == 0);
  }
  SUBCASE("batchnorm2d train and eval") {
    auto x = random_tensor<double>(Shape{3, 2, 3, 3}, rng);
    BatchNormState<double> st(2);
    for (auto& v : st.gamma.values()) v = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng);
    for (auto& v : st.beta.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    auto train = [&](Tape<double>* t) { return batchnorm2d(x, st, Mode::kTrain, t); };
    CHECK(check_op_gradient(train, x, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(train, st.gamma, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(train, st.beta, rng).max_rel_error <= kTol);
    st.running_mean = {0.3, -0.2};
    st.running_var = {1.7, 0.4};
    auto eval = [&](Tape<double>* t) { return batchnorm2d(x, st, Mode::kEval, t); };
    CHECK(check_op_gradient(eval, x, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(eval, st.gamma, rng).max_rel_error <= kTol);
  }
  SUBCASE("global_avg_pool") {
    auto x = random_tensor<double>(Shape{2, 3, 4, 4}, rng);
    auto op = [&](Tape<double>* t) { return global_avg_pool(x, t); };
    CHECK(check_op_gradient(op, x, rng).max_rel_error <= kTol);
  }
  SUBCASE("affine") {
    auto x = random_tensor<double>(Shape{3, 4}, rng);
    auto w = random_tensor<double>(Shape{2, 4}, rng);
    auto b = random_tensor<double>(Shape{2}, rng);
    auto op = [&](Tape<double>* t) { return affine(x, w, b, t); };
    CHECK(check_op_gradient(op, x, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(op, w, rng).max_rel_error <= kTol);
    CHECK(check_op_gradient(op, b, rng).max_rel_error <= kTol);
  }
  SUBCASE("cross_entropy") {
    auto x = random_tensor<double>(Shape{2, 2, 3, 2}, rng, -2.0, 2.0);
    std::vector<std::int32_t> labels{0, 1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0};
    auto op = [&](Tape<double>* t) { return cross_entropy(x, labels, t); };
    CHECK(check_op_gradient(op, x, rng).max_rel_error <= kTol);
  }
}

TEST_CASE("ops are deterministic") {
  std::mt19937_64 rng(12);
  auto x = random_tensor<float>(Shape{2, 3, 9, 9}, rng);
  auto w = random_tensor<float>(Shape{4, 3, 3, 3}, rng);
  auto b = random_tensor<float>(Shape{4}, rng);
  auto run = [&] {
    BatchNormState<float> st(4);
    auto y = batchnorm2d(relu(conv2d_valid(x, w, b)), st, Mode::kTrain);
    return std::vector<float>(y.values().begin(), y.values().end());
  };
  CHECK(run() == run());
}
