#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>

#include "lhz/diffcore/adam.hpp"
#include "lhz/diffcore/errors.hpp"
#include "lhz/diffcore/grad_check.hpp"
#include "lhz/diffcore/ops.hpp"
#include "lhz/diffcore/params.hpp"
#include "lhz/diffcore/random.hpp"

using namespace lhz::diff;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.raw()) v = u(rng);
  return t;
}

// Naive triple loop, kept independent of ops.cpp.
Tensor naive_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t rows = x.dim(0), n = x.dim(1), m = w.dim(1);
  Tensor out(Shape{rows, m});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < n; ++i) acc += x.at(r, i) * w.at(i, j);
      out.at(r, j) = acc;
    }
  return out;
}

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Max relative error between backward() and central differences w.r.t. every input.
double fd_error(const Builder& f, const std::vector<Tensor>& inputs, double eps = 1e-5) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.leaf(t, true));
  Var loss = f(g, vars);
  g.backward(loss);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = g.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor> shifted = inputs;
        shifted[k][i] += delta;
        Graph h(false);
        std::vector<Var> hv;
        for (const Tensor& t : shifted) hv.push_back(h.leaf(t));
        return f(h, hv).item();
      };
      const double numeric = (eval(eps) - eval(-eps)) / (2 * eps);
      worst = std::max(worst, gradient_rel_error(analytic[i], numeric));
    }
  }
  return worst;
}

}  // namespace

TEST(Affine, IdentityWeight) {
  Graph g;
  Var y = affine(g.constant(Tensor::vector({1, 2})), g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                 g.constant(Tensor::vector({0, 0})));
  EXPECT_EQ(y.value().raw(), (std::vector<double>{1, 2}));
}

TEST(Affine, ZeroWeightPassesBias) {
  Graph g;
  Var y = affine(g.constant(Tensor::vector({1, 1})), g.constant(Tensor(Shape{2, 2})),
                 g.constant(Tensor::vector({3, 4})));
  EXPECT_EQ(y.value().raw(), (std::vector<double>{3, 4}));
}

TEST(Affine, MatchesNaiveMatmul) {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({4, 5}, rng);
  const Tensor b = random_tensor({5}, rng);
  Graph g;
  Var y = affine(g.constant(x), g.constant(w), g.constant(b));
  const Tensor expected = naive_affine(x, w, b);
  ASSERT_EQ(y.shape(), expected.shape());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(y.value()[i], expected[i], 1e-12);
}

TEST(Affine, ShapeMismatchNamesBothShapes) {
  Graph g;
  try {
    affine(g.constant(Tensor(Shape{3})), g.constant(Tensor(Shape{2, 5})),
           g.constant(Tensor(Shape{5})));
    FAIL() << "expected DimensionError";
  } catch (const lhz::DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[3]"), std::string::npos);
    EXPECT_NE(msg.find("[2,5]"), std::string::npos);
  }
}

TEST(Elementwise, TanhAtOrigin) {
  Graph g;
  Var x = g.leaf(Tensor::vector({0.0}), true);
  Var y = sum(tanh(x));
  EXPECT_EQ(y.item(), 0.0);
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 1.0);
}

TEST(Elementwise, SigmoidAtOrigin) {
  Graph g;
  EXPECT_DOUBLE_EQ(sigmoid(g.scalar(0.0)).item(), 0.5);
}

TEST(Elementwise, ExpLogRoundTrip) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({50}, rng, 0.01, 20.0);
  Graph g;
  Var y = exp(log(g.constant(x)));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.value()[i], x[i], 1e-12 * x[i]);
}

TEST(Elementwise, LogRejectsNonPositive) {
  Graph g;
  EXPECT_THROW(log(g.constant(Tensor::vector({1.0, 0.0}))), lhz::DomainError);
  EXPECT_THROW(log(g.constant(Tensor::vector({-2.0}))), lhz::DomainError);
}

TEST(Elementwise, DispatchMatchesDirectCalls) {
  Graph g;
  Var a = g.constant(Tensor::vector({0.3, -1.2}));
  Var b = g.constant(Tensor::vector({2.0, 0.5}));
  const std::vector<Var> ab{a, b};
  const std::vector<Var> one{b};
  EXPECT_EQ(elementwise(ElementwiseOp::kMul, ab).value(), mul(a, b).value());
  EXPECT_EQ(elementwise(ElementwiseOp::kSub, ab).value(), sub(a, b).value());
  EXPECT_EQ(elementwise(ElementwiseOp::kLog, one).value(), log(b).value());
  EXPECT_THROW(elementwise(ElementwiseOp::kAdd, one), lhz::DimensionError);
}

TEST(GaussianLogpdf, StandardNormalAtMean) {
  Graph g;
  Var lp = gaussian_logpdf(g.scalar(0.0), g.scalar(0.0), g.scalar(0.0));
  EXPECT_NEAR(lp.item(), -0.9189385, 1e-7);
}

TEST(GaussianLogpdf, AdditiveOverDimensions) {
  Graph g;
  const std::size_t k = 6;
  Tensor mu = Tensor::vector({0.1, -2, 3, 0.5, 7, -1});
  Var lp = gaussian_logpdf(g.constant(mu), g.constant(mu), g.constant(Tensor(Shape{k})));
  EXPECT_NEAR(lp.item(), -0.9189385 * k, 1e-6);
}

TEST(GaussianLogpdf, AgreesWithTrapezoidalQuadrature) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const double mu = u(rng), log_sigma = 0.5 * u(rng), x = mu + u(rng);
    auto logpdf = [&](double v) {
      Graph g(false);
      return gaussian_logpdf(g.scalar(v), g.scalar(mu), g.scalar(log_sigma)).item();
    };
    const double sigma = std::exp(log_sigma);
    const double lo = mu - 14 * sigma, hi = mu + 14 * sigma;
    const int n = 40000;
    const double h = (hi - lo) / n;
    double integral = 0.5 * (std::exp(logpdf(lo)) + std::exp(logpdf(hi)));
    for (int i = 1; i < n; ++i) integral += std::exp(logpdf(lo + i * h));
    integral *= h;
    EXPECT_NEAR(integral, 1.0, 1e-8);
    EXPECT_NEAR(logpdf(x), std::log(std::exp(logpdf(x)) / integral), 1e-8);
  }
}

TEST(GaussianLogpdf, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(gaussian_logpdf(g.constant(Tensor(Shape{2})), g.constant(Tensor(Shape{3})),
                               g.constant(Tensor(Shape{2}))),
               lhz::DimensionError);
}

TEST(Backward, ConstantLossGivesZeroGrads) {
  Graph g;
  Var w = g.leaf(Tensor::vector({1, 2}), true);
  Var loss = add(sum(scale(w, 0.0)), g.scalar(3.0));
  g.backward(loss);
  EXPECT_EQ(g.grad(w).raw(), (std::vector<double>{0, 0}));
}

TEST(Backward, SumOfSquares) {
  Graph g;
  Var w = g.leaf(Tensor::vector({1, 2}), true);
  g.backward(sum(square(w)));
  EXPECT_EQ(g.grad(w).raw(), (std::vector<double>{2, 4}));
}

TEST(Backward, LossGradIsOne) {
  Graph g;
  Var w = g.leaf(Tensor::vector({1, 2}), true);
  Var loss = sum(square(w));
  g.backward(loss);
  EXPECT_EQ(g.grad(loss).item(), 1.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Graph g;
  Var w = g.leaf(Tensor::vector({1, 2}), true);
  EXPECT_THROW(g.backward(square(w)), lhz::ContractError);
}

TEST(Backward, SharedNodeAccumulatesBothConsumers) {
  std::mt19937_64 rng(9);
  const Builder f = [](Graph&, const std::vector<Var>& in) {
    Var shared = tanh(in[0]);
    return sum(shared * in[1] + exp(scale(shared, 0.5)));
  };
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_LT(fd_error(f, {random_tensor({4}, rng), random_tensor({4}, rng)}), 1e-4);
  }
  Graph g;
  Var x = g.leaf(Tensor::vector({0.7}), true);
  Var y = sum(x * x + x);  // d/dx = 2x + 1
  g.backward(y);
  EXPECT_NEAR(g.grad(x)[0], 2.4, 1e-14);
}

TEST(Backward, ComposedGraphMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  const Builder f = [](Graph&, const std::vector<Var>& in) {
    Var h = tanh(affine(in[0], in[1], in[2]));
    Var ls = clamp(slice(h, 0, 2), -0.9, 0.9);
    Var lp = gaussian_logpdf(slice(h, 2, 2), in[3], ls);
    return lp + pick(log_softmax(concat({h, in[3]})), 1);
  };
  for (int trial = 0; trial < 20; ++trial) {
    const double err = fd_error(f, {random_tensor({3}, rng), random_tensor({3, 4}, rng),
                                    random_tensor({4}, rng), random_tensor({2}, rng)});
    EXPECT_LT(err, 1e-4);
  }
}

TEST(Backward, DetachBlocksGradient) {
  Graph g;
  Var x = g.leaf(Tensor::vector({1.5, -0.5}), true);
  Var y = sum(x * detach(x));
  g.backward(y);
  EXPECT_EQ(g.grad(x).raw(), (std::vector<double>{1.5, -0.5}));
}

// Every registered op against central differences on random inputs in [-2, 2].
TEST(OpProperty, AnalyticMatchesFiniteDifferences) {
  std::mt19937_64 rng(1234);
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    Builder f;
    bool positive = false;
  };
  const std::vector<Case> cases = {
      {"affine", {{3}, {3, 2}, {2}}, [](Graph&, auto& v) { return sum(square(affine(v[0], v[1], v[2]))); }},
      {"affine_batch", {{2, 3}, {3, 2}, {2}}, [](Graph&, auto& v) { return sum(square(affine(v[0], v[1], v[2]))); }},
      {"matmul", {{3}, {3, 2}}, [](Graph&, auto& v) { return sum(tanh(matmul(v[0], v[1]))); }},
      {"add", {{4}, {4}}, [](Graph&, auto& v) { return sum(square(v[0] + v[1])); }},
      {"sub", {{4}, {4}}, [](Graph&, auto& v) { return sum(square(v[0] - v[1])); }},
      {"mul", {{4}, {4}}, [](Graph&, auto& v) { return sum(v[0] * v[1]); }},
      {"neg", {{4}}, [](Graph&, auto& v) { return sum(square(-v[0])); }},
      {"scale", {{4}}, [](Graph&, auto& v) { return sum(square(scale(v[0], -1.7))); }},
      {"add_scalar", {{4}}, [](Graph&, auto& v) { return sum(square(add_scalar(v[0], 0.3))); }},
      {"tanh", {{4}}, [](Graph&, auto& v) { return sum(tanh(v[0])); }},
      {"sigmoid", {{4}}, [](Graph&, auto& v) { return sum(sigmoid(v[0])); }},
      {"exp", {{4}}, [](Graph&, auto& v) { return sum(exp(v[0])); }},
      {"log", {{4}}, [](Graph&, auto& v) { return sum(log(v[0])); }, true},
      {"square", {{4}}, [](Graph&, auto& v) { return sum(square(v[0])); }},
      {"mean", {{5}}, [](Graph&, auto& v) { return mean(square(v[0])); }},
      {"concat", {{2}, {3}}, [](Graph&, auto& v) { return sum(square(concat({v[0], v[1], v[0]}))); }},
      {"slice", {{5}}, [](Graph&, auto& v) { return sum(square(slice(v[0], 1, 3))); }},
      {"clamp", {{6}}, [](Graph&, auto& v) { return sum(square(clamp(v[0], -1.0, 1.0))); }},
      {"minimum", {{6}, {6}}, [](Graph&, auto& v) { return sum(square(minimum(v[0], v[1]))); }},
      {"log_softmax", {{5}}, [](Graph&, auto& v) { return pick(log_softmax(v[0]), 2) + sum(log_softmax(v[0])); }},
      {"pick", {{5}}, [](Graph&, auto& v) { return square(pick(v[0], 3)); }},
      {"gaussian_logpdf", {{3}, {3}, {3}}, [](Graph&, auto& v) { return gaussian_logpdf(v[0], v[1], v[2]); }},
  };
  for (const Case& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> inputs;
      for (const Shape& s : c.shapes) {
        inputs.push_back(c.positive ? random_tensor(s, rng, 0.1, 2.0) : random_tensor(s, rng));
      }
      worst = std::max(worst, fd_error(c.f, inputs));
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputs) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({6}, rng), w = random_tensor({6, 6}, rng), b = random_tensor({6}, rng);
  auto run = [&] {
    Graph g;
    Var y = sum(tanh(affine(g.constant(x), g.constant(w), g.constant(b))));
    return y.item();
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  ParamStore params;
  std::mt19937_64 rng(1);
  params.add("a", random_tensor({3, 2}, rng));
  params.add("b", random_tensor({4}, rng));
  const auto before = params.checksum();
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(params, state);
  EXPECT_EQ(params.checksum(), before);
  EXPECT_EQ(state.step, 5u);
}

TEST(Adam, FirstStepMatchesHandRecurrence) {
  ParamStore params;
  params.add("w", Tensor::scalar(1.0));
  AdamState state;
  state.learning_rate = 0.1;
  // Hand recurrence: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1.
  const double m = (1 - 0.9) * 1.0, v = (1 - 0.999) * 1.0;
  const double expected = 1.0 - 0.1 * (m / (1 - 0.9)) / (std::sqrt(v / (1 - 0.999)) + 1e-8);
  params.at("w").grad[0] = 1.0;
  adam_step(params, state);
  EXPECT_NEAR(params.at("w").value[0], expected, 1e-15);
  EXPECT_NEAR(1.0 - params.at("w").value[0], 0.1, 1e-6);
  EXPECT_EQ(params.at("w").grad[0], 0.0);
}

TEST(Adam, TwoStepsAreReproducible) {
  auto run = [] {
    ParamStore params;
    auto rng = lhz::make_rng(42);
    params.add("w", random_tensor({5}, rng));
    AdamState state;
    for (int s = 0; s < 2; ++s) {
      Graph g;
      Var w = g.param(params.at("w"));
      Var loss = sum(square(tanh(w)));
      g.backward(loss);
      params.accumulate_grads(g);
      adam_step(params, state);
    }
    return params.at("w").value;
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore params;
  std::mt19937_64 rng(2);
  params.add("w", random_tensor({4}, rng));
  params.add("m", random_tensor({4, 4}, rng));
  auto report = grad_check(
      [&params](Graph& g) {
        Var w = g.param(params.at("w"));
        return sum(square(matmul(w, g.param(params.at("m"))))) + sum(square(w));
      },
      params, 1e-5, 1e-8);
  EXPECT_LT(report.worst, 1e-8);
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.checked, 20u);
}

TEST(GradCheck, CorruptedGradientIsReported) {
  ParamStore params;
  params.add("w", Tensor::vector({0.5, -1.0}));
  auto report = grad_check([&params](Graph& g) { return sum(square(g.param(params.at("w")))); },
                           params, 1e-5, 1e-4, 0.1);
  EXPECT_GT(report.worst, 1e-4);
  EXPECT_FALSE(report.passed);
}

TEST(Serialization, BitExactRoundTrip) {
  ParamStore params;
  std::mt19937_64 rng(77);
  params.add("enc.w", random_tensor({3, 4}, rng));
  params.add("bias", random_tensor({4}, rng));
  params.add("s", Tensor::scalar(-0.0));
  params.at("bias").value[1] = 1e-310;  // subnormal survives
  std::stringstream buf;
  save_params(buf, params);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "LHZ1");
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 4, 4);
  EXPECT_EQ(count, 3u);

  ParamStore loaded = load_params(buf);
  EXPECT_EQ(loaded.checksum(), params.checksum());
  std::stringstream again;
  save_params(again, loaded);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Serialization, RejectsBadMagic) {
  std::stringstream buf("XXXX\0\0\0\0");
  EXPECT_THROW(load_params(buf), lhz::ContractError);
}

TEST(ParamStore, IteratesInLexicographicOrder) {
  ParamStore params;
  params.add("zeta", Tensor::scalar(1));
  params.add("alpha", Tensor::scalar(2));
  params.add("mid", Tensor::scalar(3));
  std::vector<std::string> names;
  for (const auto& [name, _] : params) names.push_back(name);
  EXPECT_EQ(names, (std::vector<std::string>{"alpha", "mid", "zeta"}));
  EXPECT_THROW(params.add("mid", Tensor::scalar(0)), lhz::ContractError);
}
