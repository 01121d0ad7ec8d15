#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "preflab/grad.hpp"

using namespace preflab;
using ad::Graph;
using ad::Value;

namespace {

double grad_of_scalar(const std::function<Value(Graph&, Value)>& f, double x) {
  Graph g;
  Value v = g.variable(Tensor::scalar(x));
  g.backward(f(g, v));
  return v.grad().data[0];
}

}  // namespace

TEST(Kernels, SigmoidOfZeroIsHalf) {
  Graph g;
  EXPECT_DOUBLE_EQ(ad::sigmoid(g.scalar(0.0)).item(), 0.5);
}

TEST(Kernels, ExpLogRoundTrip) {
  Graph g;
  EXPECT_NEAR(ad::exp(ad::log(g.scalar(2.5))).item(), 2.5, 1e-12);
}

TEST(Kernels, SumAndItsGradient) {
  Graph g;
  Value x = g.variable(Tensor::vector({1, 2, 3}));
  Value s = ad::sum(x);
  EXPECT_DOUBLE_EQ(s.item(), 6.0);
  g.backward(s);
  EXPECT_EQ(x.grad().data, (std::vector<double>{1, 1, 1}));
}

TEST(Kernels, MeanGradientIsUniform) {
  Graph g;
  Value x = g.variable(Tensor::vector({4, -1, 2, 7}));
  g.backward(ad::mean(x));
  for (double v : x.grad().data) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Kernels, ScalarBroadcastAndShapeMismatch) {
  Graph g;
  Value a = g.constant(Tensor::vector({1, 2, 3}));
  Value s = g.scalar(2.0);
  EXPECT_EQ((a * s).data().data, (std::vector<double>{2, 4, 6}));
  EXPECT_EQ((s - a).data().data, (std::vector<double>{1, 0, -1}));
  Value b = g.constant(Tensor::vector({1, 2}));
  EXPECT_THROW(a + b, ShapeError);
}

TEST(Kernels, LogOfNonPositiveIsRejected) {
  Graph g;
  EXPECT_THROW(ad::log(g.scalar(0.0)), DomainError);
  EXPECT_THROW(ad::log(g.constant(Tensor::vector({1.0, -2.0}))), DomainError);
}

TEST(Kernels, ReluAndGather) {
  Graph g;
  Value x = g.variable(Tensor::vector({-1.0, 0.5, 2.0}));
  Value r = ad::relu(x);
  EXPECT_EQ(r.data().data, (std::vector<double>{0.0, 0.5, 2.0}));
  Value picked = ad::gather(x, {2, 2, 0});
  EXPECT_EQ(picked.data().data, (std::vector<double>{2.0, 2.0, -1.0}));
  g.backward(ad::sum(picked));
  EXPECT_EQ(x.grad().data, (std::vector<double>{1.0, 0.0, 2.0}));
}

TEST(Kernels, OperandsAreNotMutated) {
  Graph g;
  Value a = g.variable(Tensor::vector({1, 2}));
  Value b = g.variable(Tensor::vector({3, 4}));
  Value c = a * b + a;
  EXPECT_EQ(a.data().data, (std::vector<double>{1, 2}));
  EXPECT_EQ(b.data().data, (std::vector<double>{3, 4}));
  EXPECT_EQ(c.data().data, (std::vector<double>{4, 10}));
}

TEST(LogSoftmax, UniformRow) {
  Graph g;
  Value y = ad::log_softmax(g.constant(Tensor::vector({0.0, 0.0})));
  EXPECT_NEAR(y.data().data[0], -std::log(2.0), 1e-15);
  EXPECT_NEAR(y.data().data[1], -std::log(2.0), 1e-15);
}

TEST(LogSoftmax, HandEvaluatedRow) {
  Graph g;
  Value y = ad::log_softmax(g.constant(Tensor::vector({2.0, 0.0})));
  const double lse = std::log(std::exp(2.0) + 1.0);
  EXPECT_NEAR(y.data().data[0], 2.0 - lse, 1e-15);
  EXPECT_NEAR(y.data().data[0], -0.126928, 1e-6);
  EXPECT_NEAR(y.data().data[1], -2.126928, 1e-6);
}

TEST(LogSoftmax, ShiftInvarianceAndStability) {
  Graph g;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::vector<double> h(12);
  for (auto& v : h) v = nd(rng);
  std::vector<double> shifted = h;
  for (auto& v : shifted) v += 700.0;
  Value a = ad::log_softmax(g.constant(Tensor({3, 4}, h)));
  Value b = ad::log_softmax(g.constant(Tensor({3, 4}, shifted)));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(a.data().data[i], b.data().data[i], 1e-12);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (double v : a.data().row(r)) s += std::exp(v);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(LogSoftmax, RejectsNonFinite) {
  Graph g;
  EXPECT_THROW(ad::log_softmax(g.constant(Tensor::vector({1.0, INFINITY}))), DomainError);
  EXPECT_THROW(ad::log_softmax(g.constant(Tensor::vector({NAN, 0.0}))), DomainError);
}

TEST(StopGradient, ProductRuleSeesConstantFactor) {
  EXPECT_DOUBLE_EQ(grad_of_scalar([](Graph&, Value x) { return ad::stop_gradient(x) * x; }, 3.0), 3.0);
  Graph g;
  Value x = g.variable(Tensor::scalar(3.0));
  EXPECT_EQ(ad::stop_gradient(x).item(), 3.0);
}

TEST(StopGradient, SigmoidTimesLog) {
  const double d = grad_of_scalar([](Graph&, Value x) { return ad::stop_gradient(ad::sigmoid(x)) * ad::log(x); }, 1.0);
  EXPECT_NEAR(d, 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(d, 0.731059, 1e-6);
}

TEST(StopGradient, StoppedValueKeepsZeroGradAndBitIdenticalData) {
  Graph g;
  Value x = g.variable(Tensor::vector({0.3, -1.7}));
  Value e = ad::exp(x);
  Value s = ad::stop_gradient(e);
  EXPECT_EQ(s.data().data, e.data().data);
  g.backward(ad::sum(s * x));
  for (double v : s.grad().data) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(x.grad().data, e.data().data);
}

TEST(Backward, Polynomial) {
  EXPECT_DOUBLE_EQ(grad_of_scalar([](Graph&, Value x) { return x * x; }, 3.0), 6.0);
}

TEST(Backward, SigmoidAtZero) {
  EXPECT_DOUBLE_EQ(grad_of_scalar([](Graph&, Value x) { return ad::sigmoid(x); }, 0.0), 0.25);
}

TEST(Backward, NegLogSigmoid) {
  const double d = grad_of_scalar([](Graph&, Value x) { return -ad::log_sigmoid(x); }, 0.2);
  EXPECT_NEAR(d, -1.0 / (1.0 + std::exp(0.2)), 1e-15);
  EXPECT_NEAR(d, -0.450166, 1e-6);
}

TEST(Backward, RootGradIsOne) {
  Graph g;
  Value x = g.variable(Tensor::scalar(2.0));
  Value y = ad::exp(x) * x;
  g.backward(y);
  EXPECT_EQ(y.grad().data[0], 1.0);
}

TEST(Backward, SharedSubexpressions) {
  EXPECT_DOUBLE_EQ(grad_of_scalar([](Graph&, Value x) { return x + x; }, 5.0), 2.0);
  // y = u * u with u = 3x: dy/dx = 18x
  EXPECT_DOUBLE_EQ(grad_of_scalar([](Graph&, Value x) {
                     Value u = x * 3.0;
                     return u * u;
                   }, 2.0),
                   36.0);
}

TEST(Backward, NonScalarRootRejected) {
  Graph g;
  Value x = g.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(x * 2.0), ShapeError);
}

TEST(Backward, LeafGradientsAccumulateUntilReset) {
  Graph g;
  Value x = g.variable(Tensor::scalar(3.0));
  Value y = x * x;
  g.backward(y);
  g.backward(y);
  EXPECT_DOUBLE_EQ(x.grad().data[0], 12.0);
  g.zero_grad();
  g.backward(y);
  EXPECT_DOUBLE_EQ(x.grad().data[0], 6.0);
}

TEST(Backward, GraphIsTopologicallyOrdered) {
  Graph g;
  Value x = g.variable(Tensor::vector({1, 2, 3}));
  Value y = ad::sum(ad::tanh(x) * ad::exp(x) + x);
  (void)y;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (auto p : g.node(i).parents) EXPECT_LT(p, i);
}

TEST(FiniteDifference, QuadraticIsExact) {
  const ad::ScalarFn f = [](Graph&, Value x) { return ad::sum(x * x); };
  const std::vector<double> theta{3.0};
  EXPECT_LT(ad::finite_difference_check(f, theta), 1e-8);
}

TEST(FiniteDifference, RejectsNonFiniteValues) {
  const ad::ScalarFn f = [](Graph&, Value x) { return ad::sum(ad::exp(x * 1000.0)); };
  const std::vector<double> theta{1.0};
  EXPECT_THROW(ad::finite_difference_check(f, theta), DomainError);
}

// Every kernel against central differences on random inputs in [-3, 3].
class KernelGradient : public ::testing::TestWithParam<int> {};

TEST_P(KernelGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(1000 + GetParam());
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> theta(6);
  for (auto& v : theta) v = u(rng);
  std::vector<double> positive = theta;
  for (auto& v : positive) v = std::abs(v) + 0.1;

  const std::vector<std::pair<const char*, ad::ScalarFn>> cases = {
      {"add", [](Graph&, Value x) { return ad::sum(x + ad::exp(x)); }},
      {"sub", [](Graph&, Value x) { return ad::sum(ad::tanh(x) - x * x); }},
      {"mul", [](Graph&, Value x) { return ad::sum(x * ad::sigmoid(x)); }},
      {"scale", [](Graph&, Value x) { return ad::sum(x * 2.5 + 1.0); }},
      {"exp", [](Graph&, Value x) { return ad::sum(ad::exp(x)); }},
      {"sigmoid", [](Graph&, Value x) { return ad::sum(ad::sigmoid(x)); }},
      {"log_sigmoid", [](Graph&, Value x) { return ad::sum(ad::log_sigmoid(x)); }},
      {"tanh", [](Graph&, Value x) { return ad::sum(ad::tanh(x)); }},
      {"relu", [](Graph&, Value x) { return ad::sum(ad::relu(x) * x); }},
      {"mean", [](Graph&, Value x) { return ad::mean(x * x); }},
      {"gather", [](Graph&, Value x) { return ad::sum(ad::gather(ad::exp(x), {0, 5, 5, 2})); }},
      {"slice+matmul",
       [](Graph&, Value x) {
         Value a = ad::slice(x, 0, {2, 3});
         Value b = ad::slice(x, 0, {3, 2});
         return ad::sum(ad::matmul(a, b));
       }},
      {"gather_rows", [](Graph&, Value x) { return ad::sum(ad::gather_rows(ad::slice(x, 0, {3, 2}), {2, 0, 2}) *
                                                               ad::gather_rows(ad::slice(x, 0, {3, 2}), {1, 1, 0})); }},
      {"log_softmax",
       [](Graph&, Value x) {
         Value rows = ad::log_softmax(ad::slice(x, 0, {2, 3}));
         return ad::sum(ad::gather(rows, {1, 3}));
       }},
  };
  for (const auto& [name, f] : cases) {
    EXPECT_LE(ad::finite_difference_check(f, theta), 1e-4) << name;
  }
  const ad::ScalarFn logf = [](Graph&, Value x) { return ad::sum(ad::log(x)); };
  EXPECT_LE(ad::finite_difference_check(logf, positive), 1e-4) << "log";
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, KernelGradient, ::testing::Range(0, 100));
