#include "lfd/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "lfd/model.hpp"
#include "lfd/objective.hpp"
#include "lfd/ops.hpp"

namespace lfd {
namespace {

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// Distinct values at least `gap` apart in random order.
Tensor<double> spaced(Shape shape, std::mt19937_64& rng, double gap = 0.05) {
  Tensor<double> t(std::move(shape));
  const auto n = t.numel();
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) vals[i] = (static_cast<double>(i) - n / 2.0 + 0.3) * gap;
  std::shuffle(vals.begin(), vals.end(), rng);
  std::copy(vals.begin(), vals.end(), t.values().begin());
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

class Suite {
 public:
  Suite(std::uint64_t seed, double tol) : rng_(seed) { report_.tolerance = tol; }

  // d/dX of <proj, op(X)> with a random projection.
  template <typename Op>
  void check(const std::string& name, Op op, Tensor<double>& wrt) {
    const auto proj = uniform(op(nullptr).shape(), rng_);
    auto f = [&] { return dot(op(nullptr), proj); };
    wrt.set_requires_grad(true);
    wrt.zero_grad();
    Tape<double> tape;
    auto y = op(&tape);
    backward(y, std::span<const double>(proj.values()), tape);
    const std::vector<double> analytic(wrt.grad().begin(), wrt.grad().end());
    record(name, compare_with_finite_differences(f, wrt, analytic));
  }

  void record(const std::string& name, const GradComparison& r) {
    report_.cases.push_back({name, r, r.checked > 0 && r.max_rel_error <= report_.tolerance});
  }

  std::mt19937_64& rng() { return rng_; }
  GradcheckReport& report() { return report_; }

 private:
  std::mt19937_64 rng_;
  GradcheckReport report_;
};

void check_ops(Suite& s) {
  auto& rng = s.rng();
  {
    auto x = uniform(Shape{2, 2, 6, 5}, rng);
    auto w = uniform(Shape{3, 2, 3, 3}, rng);
    auto b = uniform(Shape{3}, rng);
    auto op = [&](Tape<double>* t) { return conv2d_valid(x, w, b, t); };
    s.check("conv2d_valid/input", op, x);
    s.check("conv2d_valid/weight", op, w);
    s.check("conv2d_valid/bias", op, b);
  }
  {
    auto x = spaced(Shape{2, 2, 7, 7}, rng);
    auto op = [&](Tape<double>* t) { return maxpool2d(x, 3, 2, t); };
    s.check("maxpool2d/input", op, x);
  }
  {
    auto x = spaced(Shape{3, 2, 4, 4}, rng);
    auto op = [&](Tape<double>* t) { return relu(x, t); };
    s.check("relu/input", op, x);
  }
  {
    auto x = uniform(Shape{3, 2, 3, 4}, rng);
    BatchNormState<double> st(2);
    for (auto& v : st.gamma.values()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for (auto& v : st.beta.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    auto train = [&](Tape<double>* t) { return batchnorm2d(x, st, Mode::kTrain, t); };
    s.check("batchnorm2d_train/input", train, x);
    s.check("batchnorm2d_train/gamma", train, st.gamma);
    s.check("batchnorm2d_train/beta", train, st.beta);
    st.running_mean = {0.3, -0.2};
    st.running_var = {1.7, 0.4};
    auto eval = [&](Tape<double>* t) { return batchnorm2d(x, st, Mode::kEval, t); };
    s.check("batchnorm2d_eval/input", eval, x);
    s.check("batchnorm2d_eval/gamma", eval, st.gamma);
    s.check("batchnorm2d_eval/beta", eval, st.beta);
  }
  {
    auto x = uniform(Shape{2, 3, 4, 5}, rng);
    auto op = [&](Tape<double>* t) { return global_avg_pool(x, t); };
    s.check("global_avg_pool/input", op, x);
  }
  {
    auto x = uniform(Shape{3, 4}, rng);
    auto w = uniform(Shape{2, 4}, rng);
    auto b = uniform(Shape{2}, rng);
    auto op = [&](Tape<double>* t) { return affine(x, w, b, t); };
    s.check("affine/input", op, x);
    s.check("affine/weight", op, w);
    s.check("affine/bias", op, b);
  }
  {
    auto x = uniform(Shape{2, 2, 3, 2}, rng, -2.0, 2.0);
    std::vector<std::int32_t> labels(12);
    for (auto& l : labels) l = static_cast<std::int32_t>(rng() % 2);
    auto op = [&](Tape<double>* t) { return cross_entropy(x, labels, t); };
    s.check("cross_entropy/logits", op, x);
  }
}

template <typename To, typename From>
Tensor<To> widen(const Tensor<From>& t) {
  Tensor<To> out(t.shape());
  std::transform(t.values().begin(), t.values().end(), out.values().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

// Default layer stack at width 3, input 35 (2×2 grid), one seg head, batch 2.
// Analytic gradients come from the 64-bit model; the finite differences run on
// an extended-precision copy with identical values.
void check_network(Suite& s) {
  using Wide = long double;
  auto& rng = s.rng();
  ArchConfig arch;
  arch.input_size = 35;
  std::fill(arch.conv_channels.begin(), arch.conv_channels.end(), 3);
  const auto seed = rng();
  auto model = build_model<double>(arch, seed);
  for (auto& block : model.blocks) {
    for (auto& v : block.bn.gamma.values()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for (auto& v : block.bn.beta.values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }
  auto wide = build_model<Wide>(arch, seed);
  auto params = model.parameters();
  auto wide_params = wide.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto src = params[i].tensor.values();
    std::copy(src.begin(), src.end(), wide_params[i].tensor.values().begin());
  }

  auto x = uniform(Shape{2, 3, 35, 35}, rng, -0.5, 0.5);
  auto wide_x = widen<Wide>(x);
  const std::vector<std::int32_t> labels{0, 1};
  const auto grid = output_grid(arch, 35);
  std::vector<SegLabelGrid> seg(2);
  for (auto& g : seg) {
    g.dims = grid;
    g.labels.resize(static_cast<std::size_t>(grid.rows * grid.cols));
    for (auto& l : g.labels) l = static_cast<std::int32_t>(rng() % 2);
  }
  const LossWeights weights{0.6, {0.4}};

  auto loss = [&]<typename T>(Model<T>& m, const Tensor<T>& input, Tape<T>* tape) {
    auto out = forward(m, input, Mode::kTrain, tape);
    const std::vector<Tensor<T>> segs{seg_loss(out.seg_logits[0], seg, tape)};
    return joint_loss(weights, cls_loss(out.image_logits, labels, tape),
                      std::span<const Tensor<T>>(segs), tape);
  };
  auto f = [&]() -> Wide { return loss(wide, wide_x, static_cast<Tape<Wide>*>(nullptr))[0]; };

  x.set_requires_grad(true);
  model.zero_grad();
  x.zero_grad();
  Tape<double> tape;
  auto l = loss(model, x, &tape);
  backward(l, tape);

  auto compare = [&](const std::string& name, const Tensor<double>& t, Tensor<Wide>& point) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    s.record("network/" + name, compare_with_finite_differences<Wide>(f, point, analytic));
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    compare(params[i].name, params[i].tensor, wide_params[i].tensor);
  }
  compare("input", x, wide_x);
}

}  // namespace

GradcheckReport run_gradcheck_suite(std::uint64_t seed, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  Suite suite(seed, tolerance);
  check_ops(suite);
  check_network(suite);
  auto report = std::move(suite.report());
  report.passed = std::all_of(report.cases.begin(), report.cases.end(),
                              [](const GradcheckCase& c) { return c.passed; });
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace lfd
