#include <gtest/gtest.h>

#include <random>

#include "metaeol/logreg.hpp"

using namespace metaeol;

namespace {

struct Problem {
  Matrix x;
  std::vector<int> y;
  std::size_t classes;
};

Problem random_problem(std::mt19937_64& rng, std::size_t n, std::size_t d, std::size_t c) {
  std::normal_distribution<double> g;
  Problem p{Matrix(n, d), std::vector<int>(n), c};
  for (auto& v : p.x.data) v = g(rng);
  for (std::size_t i = 0; i < n; ++i) p.y[i] = static_cast<int>(i % c);
  return p;
}

}  // namespace

TEST(SoftmaxObjective, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_problem(rng, 15 + trial, 2 + trial % 5, 2 + trial % 4);
    const double lambda = trial % 2 ? 0.1 : 1e-3;
    SoftmaxObjective obj(p.x, p.y, p.classes, lambda);
    std::vector<double> params(obj.num_params());
    for (auto& v : params) v = 0.5 * g(rng);
    std::vector<double> grad;
    obj.value_and_gradient(params, grad);
    const double h = 1e-5;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto plus = params, minus = params;
      plus[k] += h;
      minus[k] -= h;
      const double numeric = (obj.value(plus) - obj.value(minus)) / (2 * h);
      const double rel = std::abs(numeric - grad[k]) / std::max({std::abs(numeric), std::abs(grad[k]), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(SoftmaxObjective, BiasIsNotRegularized) {
  Matrix x(2, 1);
  x(0, 0) = 1;
  x(1, 0) = -1;
  const std::vector<int> y{0, 1};
  SoftmaxObjective a(x, y, 2, 0.0), b(x, y, 2, 10.0);
  const std::vector<double> bias_only{0, 0, 3, -3};
  EXPECT_DOUBLE_EQ(a.value(bias_only), b.value(bias_only));
}

TEST(TrainLogreg, SeparableToyIsPerfect) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 0.3);
  const std::vector<std::pair<double, double>> centers{{3, 0}, {-3, 0}, {0, 3}, {0, -3}};
  Matrix x(80, 2);
  std::vector<int> y(80);
  for (std::size_t i = 0; i < 80; ++i) {
    y[i] = static_cast<int>(i % 4);
    x(i, 0) = centers[y[i]].first + g(rng);
    x(i, 1) = centers[y[i]].second + g(rng);
  }
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const auto r = train_logreg(x, y, 4, lambda);
    EXPECT_EQ(accuracy(predict(r.model, x), y), 1.0) << lambda;
    EXPECT_LT(r.gradient_inf_norm, 1e-5);
  }
}

TEST(TrainLogreg, ConvergesToSameOptimumFromAnyStart) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_problem(rng, 60, 6, 3);
    const auto zero = train_logreg(p.x, p.y, p.classes, 0.01);
    double best = zero.objective;
    for (int run = 0; run < 3; ++run) {
      TrainOptions opts;
      std::vector<double> init(p.classes * 6 + p.classes);
      for (auto& v : init) v = 2.0 * g(rng);
      opts.initial_params = init;
      const auto other = train_logreg(p.x, p.y, p.classes, 0.01, opts);
      EXPECT_LT(std::abs(other.objective - zero.objective), 1e-6);
      best = std::min(best, other.objective);
    }
    EXPECT_LT(zero.objective - best, 1e-6);
  }
}

TEST(TrainLogreg, ObjectiveNeverIncreases) {
  std::mt19937_64 rng(4);
  const auto p = random_problem(rng, 50, 5, 3);
  const auto r = train_logreg(p.x, p.y, p.classes, 0.001);
  ASSERT_GE(r.objective_trace.size(), 2u);
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i) EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1]);
  EXPECT_DOUBLE_EQ(r.objective_trace.front(), std::log(3.0));
}

TEST(TrainLogreg, Deterministic) {
  std::mt19937_64 rng(6);
  const auto p = random_problem(rng, 40, 4, 2);
  const auto a = train_logreg(p.x, p.y, 2, 0.1);
  const auto b = train_logreg(p.x, p.y, 2, 0.1);
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.model.bias, b.model.bias);
}

TEST(TrainLogreg, RejectsBadData) {
  Matrix x(3, 1);
  const std::vector<int> one_class{0, 0, 0};
  try {
    train_logreg(x, one_class, 2, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingClass);
  }
  Matrix bad(2, 1);
  bad(0, 0) = std::nan("");
  const std::vector<int> y{0, 1};
  try {
    train_logreg(bad, y, 2, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
}

TEST(Predict, TiesGoToLowestClass) {
  LogRegModel m{3, 1, {0, 0, 0}, {1, 1, 0}, 0};
  Matrix x(1, 1);
  EXPECT_EQ(predict(m, x), (std::vector<int>{0}));
  const auto p = predict_proba(m, x);
  EXPECT_NEAR(p(0, 0) + p(0, 1) + p(0, 2), 1.0, 1e-12);
}
