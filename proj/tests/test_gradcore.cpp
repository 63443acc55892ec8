// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "pfr/gradcore/grad_check.hpp"
#include "pfr/gradcore/ops.hpp"
#include "pfr/gradcore/optim.hpp"
#include "pfr/gradcore/schedule.hpp"
#include "pfr/util/rng.hpp"

namespace {

using pfr::Tensor;

Tensor random_tensor(pfr::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  pfr::Rng rng(seed);
  std::vector<double> v(pfr::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

/// Values bounded away from zero so relu/sqrt/log are probed off their kinks.
Tensor away_from_zero(pfr::Shape shape, std::uint64_t seed) {
  pfr::Rng rng(seed);
  std::vector<double> v(pfr::shape_numel(shape));
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 1.5);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

void expect_values(const Tensor& t, const std::vector<double>& expected, double tol = 0.0) {
  ASSERT_EQ(t.numel(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t.at(i), expected[i], tol) << "index " << i;
}

TEST(Matmul, IdentityTimesIdentity) {
  const auto i2 = Tensor::eye(2);
  expect_values(pfr::matmul(i2, i2), {1, 0, 0, 1});
}

TEST(Matmul, HandCase) {
  const auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  const auto b = Tensor::from_data({2, 1}, {0, 1});
  const auto c = pfr::matmul(a, b);
  EXPECT_EQ(c.shape(), (pfr::Shape{2, 1}));
  expect_values(c, {2, 4});
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  auto a = random_tensor({3, 4}, 1);
  auto b = random_tensor({4, 2}, 2);
  std::vector<Tensor> in{a, b};
  EXPECT_LT(pfr::grad_check([&] { return pfr::sum(pfr::square(pfr::matmul(a, b))); }, in), 1e-6);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(pfr::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), pfr::DimensionError);
}

TEST(Elementwise, Relu) { expect_values(pfr::relu(Tensor::from_data({3}, {-1, 0, 2})), {0, 0, 2}); }

TEST(Elementwise, RowBroadcastAdd) {
  const auto x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto bias = Tensor::from_data({1, 3}, {10, 20, 30});
  expect_values(pfr::add(x, bias), {11, 22, 33, 14, 25, 36});
}

TEST(Elementwise, IncompatibleShapesThrow) {
  EXPECT_THROW(pfr::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), pfr::DimensionError);
}

TEST(Elementwise, DispatchMatchesNamedOps) {
  const auto a = away_from_zero({2, 3}, 3);
  const auto b = away_from_zero({2, 3}, 4);
  const auto same = [](const Tensor& x, const Tensor& y) {
    ASSERT_EQ(x.numel(), y.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(x.at(i), y.at(i));
  };
  same(pfr::elementwise(pfr::ElementwiseOp::add, a, b), pfr::add(a, b));
  same(pfr::elementwise(pfr::ElementwiseOp::div, a, b), pfr::div(a, b));
  same(pfr::elementwise(pfr::ElementwiseOp::scale, a, {}, 2.5), pfr::scale(a, 2.5));
  EXPECT_THROW(pfr::elementwise(pfr::ElementwiseOp::mul, a), pfr::ContractError);
}

TEST(Elementwise, LogOfNonPositiveThrows) {
  EXPECT_THROW(pfr::log(Tensor::from_data({2}, {1.0, 0.0})), pfr::NumericError);
}

TEST(Elementwise, DivisionByZeroThrows) {
  EXPECT_THROW(pfr::div(Tensor::from_data({2}, {1.0, 1.0}), Tensor::from_data({2}, {1.0, 0.0})),
               pfr::NumericError);
}

using UnaryOp = std::function<Tensor(const Tensor&)>;

struct UnaryCase {
  const char* name;
  UnaryOp op;
  bool positive_input;
};

class UnaryGradient : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(UnaryGradient, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  Tensor x = c.positive_input ? random_tensor({3, 4}, 7, 0.3, 2.0) : away_from_zero({3, 4}, 7);
  const auto w = random_tensor(c.op(x).shape(), 8).detach();
  std::vector<Tensor> in{x};
  EXPECT_LT(pfr::grad_check([&] { return pfr::sum(pfr::mul(c.op(x), w)); }, in), 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    Ops, UnaryGradient,
    ::testing::Values(UnaryCase{"relu", [](const Tensor& x) { return pfr::relu(x); }, false},
                      UnaryCase{"exp", [](const Tensor& x) { return pfr::exp(x); }, false},
                      UnaryCase{"log", [](const Tensor& x) { return pfr::log(x); }, true},
                      UnaryCase{"sqrt", [](const Tensor& x) { return pfr::sqrt(x); }, true},
                      UnaryCase{"square", [](const Tensor& x) { return pfr::square(x); }, false},
                      UnaryCase{"neg", [](const Tensor& x) { return pfr::neg(x); }, false},
                      UnaryCase{"scale", [](const Tensor& x) { return pfr::scale(x, -1.7); }, false},
                      UnaryCase{"add_scalar", [](const Tensor& x) { return pfr::add_scalar(x, 0.4); }, false},
                      UnaryCase{"clamp_min", [](const Tensor& x) { return pfr::clamp_min(x, 0.1); }, false},
                      UnaryCase{"transpose", [](const Tensor& x) { return pfr::transpose(x); }, false},
                      UnaryCase{"reshape", [](const Tensor& x) { return pfr::reshape(x, {2, 6}); }, false},
                      UnaryCase{"l2norm_axis1", [](const Tensor& x) { return pfr::l2norm_axis(x, 1); }, false},
                      UnaryCase{"mean_axis0", [](const Tensor& x) { return pfr::mean_axis(x, 0); }, false},
                      UnaryCase{"sum_axis1", [](const Tensor& x) { return pfr::sum_axis(x, 1); }, false}),
    [](const auto& info) { return std::string(info.param.name); });

using BinaryOp = std::function<Tensor(const Tensor&, const Tensor&)>;

class BinaryGradient : public ::testing::TestWithParam<std::pair<const char*, BinaryOp>> {};

TEST_P(BinaryGradient, MatchesFiniteDifferencesWithBroadcast) {
  const auto& [name, op] = GetParam();
  auto a = away_from_zero({3, 4}, 11);
  auto b = away_from_zero({1, 4}, 12);
  std::vector<Tensor> in{a, b};
  EXPECT_LT(pfr::grad_check([&] { return pfr::sum(pfr::square(op(a, b))); }, in), 1e-6) << name;
  auto c = away_from_zero({3, 4}, 13);
  std::vector<Tensor> in2{a, c};
  EXPECT_LT(pfr::grad_check([&] { return pfr::sum(pfr::square(op(a, c))); }, in2), 1e-6) << name;
}

INSTANTIATE_TEST_SUITE_P(Ops, BinaryGradient,
                         ::testing::Values(std::pair<const char*, BinaryOp>{"add", pfr::add<double>},
                                           std::pair<const char*, BinaryOp>{"sub", pfr::sub<double>},
                                           std::pair<const char*, BinaryOp>{"mul", pfr::mul<double>},
                                           std::pair<const char*, BinaryOp>{"div", pfr::div<double>}),
                         [](const auto& info) { return std::string(info.param.first); });

TEST(ConcatRows, StacksAndSplitsGradient) {
  auto a = random_tensor({2, 3}, 21);
  auto b = random_tensor({4, 3}, 22);
  const auto c = pfr::concat_rows(a, b);
  EXPECT_EQ(c.shape(), (pfr::Shape{6, 3}));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(c.at(0, j), a.at(0, j));
    EXPECT_EQ(c.at(5, j), b.at(3, j));
  }
  std::vector<Tensor> in{a, b};
  EXPECT_LT(pfr::grad_check([&] { return pfr::sum(pfr::square(pfr::concat_rows(a, b))); }, in), 1e-6);
}

TEST(Reduce, SumAll) { EXPECT_EQ(pfr::sum(Tensor::from_data({2, 2}, {1, 2, 3, 4})).item(), 10.0); }

TEST(Reduce, OneHotNorm) {
  EXPECT_DOUBLE_EQ(pfr::reduce(pfr::ReduceOp::l2norm, Tensor::from_data({4}, {0, 0, 1, 0})).item(), 1.0);
}

TEST(Reduce, MeanGradientIsOneOverN) {
  auto x = random_tensor({3, 5}, 31);
  pfr::backward(pfr::mean(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 15.0);
  std::vector<Tensor> in{x};
  EXPECT_LT(pfr::grad_check([&] { return pfr::mean(x); }, in), 1e-8);
}

TEST(Reduce, KeepdimShapes) {
  const auto x = Tensor::zeros({3, 5});
  EXPECT_EQ(pfr::sum_axis(x, 0).shape(), (pfr::Shape{1, 5}));
  EXPECT_EQ(pfr::sum_axis(x, 1).shape(), (pfr::Shape{3, 1}));
  EXPECT_EQ(pfr::reduce(pfr::ReduceOp::sum, x, std::vector<std::size_t>{1}, false).shape(), (pfr::Shape{3}));
}

TEST(Reduce, EmptyAxisListThrows) {
  EXPECT_THROW(pfr::reduce(pfr::ReduceOp::sum, Tensor::zeros({2, 2}), std::vector<std::size_t>{}),
               pfr::NumericError);
}

TEST(BatchNorm, ConstantColumnYieldsShift) {
  auto x = Tensor::from_data({3, 1}, {2.0, 2.0, 2.0});
  auto gamma = Tensor::from_data({1}, {1.7});
  auto beta = Tensor::from_data({1}, {0.3});
  pfr::BatchNormStats<double> stats(1);
  expect_values(pfr::batchnorm1d(x, gamma, beta, stats, pfr::Mode::train), {0.3, 0.3, 0.3}, 1e-12);
}

TEST(BatchNorm, StandardizesColumn) {
  auto x = Tensor::from_data({2, 1}, {-1.0, 1.0});
  auto gamma = Tensor::from_data({1}, {1.0});
  auto beta = Tensor::from_data({1}, {0.0});
  pfr::BatchNormStats<double> stats(1);
  const auto y = pfr::batchnorm1d(x, gamma, beta, stats, pfr::Mode::train);
  const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
  expect_values(y, {-scale, scale}, 1e-12);
  EXPECT_NEAR(stats.running_mean[0], 0.0, 1e-15);
  EXPECT_NEAR(stats.running_var[0], 0.9 + 0.1 * 2.0, 1e-15);
}

TEST(BatchNorm, TrainGradientMatchesFiniteDifferences) {
  auto x = random_tensor({8, 4}, 41);
  auto gamma = random_tensor({4}, 42, 0.5, 1.5);
  auto beta = random_tensor({4}, 43);
  auto w = random_tensor({8, 4}, 44);
  std::vector<Tensor> in{x, gamma, beta};
  const auto f = [&] {
    pfr::BatchNormStats<double> stats(4);
    return pfr::sum(pfr::mul(pfr::batchnorm1d(x, gamma, beta, stats, pfr::Mode::train), w.detach()));
  };
  EXPECT_LT(pfr::grad_check(f, in), 1e-6);
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  auto x = random_tensor({5, 3}, 45);
  auto gamma = random_tensor({3}, 46, 0.5, 1.5);
  auto beta = random_tensor({3}, 47);
  pfr::BatchNormStats<double> stats(3);
  stats.running_mean = {0.1, -0.2, 0.3};
  stats.running_var = {1.5, 0.5, 2.0};
  const auto before = stats.running_mean;
  const auto y = pfr::batchnorm1d_eval(x, gamma, beta, stats);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double expect = gamma.at(j) * (x.at(i, j) - stats.running_mean[j]) /
                                std::sqrt(stats.running_var[j] + 1e-5) + beta.at(j);
      EXPECT_NEAR(y.at(i, j), expect, 1e-12);
    }
  }
  EXPECT_EQ(stats.running_mean, before);
  auto w = random_tensor({5, 3}, 48);
  std::vector<Tensor> in{x, gamma, beta};
  EXPECT_LT(pfr::grad_check([&] { return pfr::sum(pfr::mul(pfr::batchnorm1d_eval(x, gamma, beta, stats), w.detach())); },
                            in),
            1e-6);
}

TEST(BatchNorm, SingleRowInTrainModeThrows) {
  pfr::BatchNormStats<double> stats(2);
  EXPECT_THROW(pfr::batchnorm1d(Tensor::zeros({1, 2}), Tensor::full({2}, 1.0), Tensor::zeros({2}), stats,
                                pfr::Mode::train),
               pfr::DegenerateBatchError);
  EXPECT_NO_THROW(pfr::batchnorm1d(Tensor::zeros({1, 2}), Tensor::full({2}, 1.0), Tensor::zeros({2}), stats,
                                   pfr::Mode::eval));
}

TEST(CrossEntropy, MatchesDirectSoftmax) {
  auto logits = random_tensor({3, 4}, 51);
  const std::vector<std::size_t> targets{2, 0, 3};
  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(logits.at(i, j));
    expect += std::log(z) - logits.at(i, targets[i]);
  }
  EXPECT_NEAR(pfr::cross_entropy(logits, targets).item(), expect / 3.0, 1e-12);
  std::vector<Tensor> in{logits};
  EXPECT_LT(pfr::grad_check([&] { return pfr::cross_entropy(logits, targets); }, in), 1e-6);
}

TEST(CrossEntropy, DiagonalExclusion) {
  auto logits = random_tensor({3, 3}, 52);
  const std::vector<std::size_t> targets{1, 2, 0};
  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      if (j != i) z += std::exp(logits.at(i, j));
    }
    expect += std::log(z) - logits.at(i, targets[i]);
  }
  EXPECT_NEAR(pfr::cross_entropy(logits, targets, true).item(), expect / 3.0, 1e-12);
  std::vector<Tensor> in{logits};
  EXPECT_LT(pfr::grad_check([&] { return pfr::cross_entropy(logits, targets, true); }, in), 1e-6);
  const std::vector<std::size_t> bad{0, 2, 0};
  EXPECT_THROW(pfr::cross_entropy(logits, bad, true), pfr::ContractError);
}

TEST(Backward, SumGivesOnes) {
  auto w = random_tensor({4}, 61);
  pfr::backward(pfr::sum(w));
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquaredNormGivesTwiceInput) {
  auto w = random_tensor({5}, 62);
  pfr::backward(pfr::sum(pfr::square(w)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * w.at(i));
}

TEST(Backward, NonScalarLossThrows) {
  auto w = random_tensor({3}, 63);
  EXPECT_THROW(pfr::backward(pfr::square(w)), pfr::ContractError);
  EXPECT_THROW(pfr::backward(pfr::sum(w.detach())), pfr::ContractError);
}

TEST(Backward, AccumulatesLinearly) {
  auto w = random_tensor({3, 2}, 64);
  auto x = random_tensor({4, 3}, 65).detach();
  const auto loss = [&] { return pfr::sum(pfr::square(pfr::matmul(x, w))); };
  pfr::backward(loss());
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  pfr::backward(loss());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Backward, SharedSubexpressionCountsBothPaths) {
  auto x = random_tensor({3}, 66);
  const auto y = pfr::square(x);
  pfr::backward(pfr::sum(pfr::add(y, y)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 4.0 * x.at(i));
}

TEST(Tape, ParentsPrecedeChildrenAndNodesAreUnique) {
  auto a = random_tensor({2, 2}, 71);
  auto b = random_tensor({2, 2}, 72);
  const auto c = pfr::mul(a, b);
  const auto d = pfr::add(c, a);
  const auto loss = pfr::sum(pfr::mul(d, c));
  const auto tape = pfr::Tape::record(loss);
  const auto nodes = tape.nodes();
  std::vector<const pfr::detail::TensorImpl<double>*> seen;
  for (const auto* n : nodes) {
    EXPECT_EQ(std::count(seen.begin(), seen.end(), n), 0);
    if (n->node) {
      for (const auto& in : n->node->inputs) {
        if (in->requires_grad) {
          EXPECT_EQ(std::count(seen.begin(), seen.end(), in.get()), 1);
        }
      }
    }
    seen.push_back(n);
  }
  EXPECT_EQ(nodes.size(), 6u);
  EXPECT_EQ(nodes.back(), loss.impl());
}

TEST(Tape, DeepChainDoesNotOverflow) {
  auto x = Tensor::scalar(1.0, true);
  Tensor y = x;
  for (int i = 0; i < 100000; ++i) y = pfr::add_scalar(y, 0.0);
  pfr::backward(y);
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Tensor, ConstructionErrors) {
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), pfr::DimensionError);
  EXPECT_THROW(Tensor::zeros({2, 0}), pfr::DimensionError);
  EXPECT_THROW(Tensor::zeros({2}).item(), pfr::ContractError);
  EXPECT_THROW(Tensor::zeros({2}).grad(), pfr::ContractError);
}

TEST(Tensor, DetachAndCloneAreIndependent) {
  auto x = random_tensor({3}, 81);
  auto d = x.detach();
  auto c = x.clone();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_TRUE(c.requires_grad());
  d.mutable_values()[0] = 42.0;
  c.mutable_values()[1] = 43.0;
  EXPECT_NE(x.at(0), 42.0);
  EXPECT_NE(x.at(1), 43.0);
}

TEST(GradCheck, LinearMapIsExact) {
  auto w = random_tensor({3, 3}, 91);
  const auto x = random_tensor({2, 3}, 92).detach();
  std::vector<Tensor> in{w};
  EXPECT_LT(pfr::grad_check([&] { return pfr::sum(pfr::matmul(x, w)); }, in), 1e-9);
}

TEST(GradCheck, MlpCompositeLoss) {
  auto w1 = random_tensor({4, 6}, 93);
  auto b1 = random_tensor({1, 6}, 94);
  auto w2 = random_tensor({6, 2}, 95);
  const auto x = random_tensor({5, 4}, 96).detach();
  std::vector<Tensor> in{w1, b1, w2};
  const auto f = [&] {
    const auto h = pfr::relu(pfr::add(pfr::matmul(x, w1), b1));
    return pfr::mean(pfr::square(pfr::matmul(h, w2)));
  };
  EXPECT_LT(pfr::grad_check(f, in), 1e-4);
}

TEST(Sgd, SingleStepHandCase) {
  auto w = Tensor::from_data({1}, {1.0}, true);
  pfr::Sgd<double> opt(0.0, 0.0);
  pfr::backward(pfr::sum(w));
  std::vector<Tensor> params{w};
  opt.step(params, 0.1);
  EXPECT_DOUBLE_EQ(w.at(0), 0.9);
  EXPECT_EQ(w.grad()[0], 0.0);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Sgd, MomentumAndWeightDecay) {
  auto w = Tensor::from_data({1}, {2.0}, true);
  pfr::Sgd<double> opt(0.9, 0.1);
  std::vector<Tensor> params{w};
  double ref_w = 2.0, ref_buf = 0.0;
  for (int s = 0; s < 3; ++s) {
    pfr::backward(pfr::sum(pfr::scale(w, 3.0)));
    opt.step(params, 0.05);
    const double d = 3.0 + 0.1 * ref_w;
    ref_buf = 0.9 * ref_buf + d;
    ref_w -= 0.05 * ref_buf;
    EXPECT_NEAR(w.at(0), ref_w, 1e-14);
  }
}

TEST(Sgd, MissingGradientThrows) {
  auto w = Tensor::from_data({1}, {1.0}, true);
  pfr::Sgd<double> opt;
  std::vector<Tensor> params{w};
  EXPECT_THROW(opt.step(params, 0.1), pfr::ContractError);
}

TEST(Sgd, QuadraticBowlConverges) {
  const std::vector<double> target{1.5, -2.0, 0.25};
  auto w = Tensor::zeros({3}, true);
  const auto t = Tensor::from_data({3}, target);
  pfr::Sgd<double> opt(0.9, 0.0);
  std::vector<Tensor> params{w};
  std::size_t steps = 0;
  for (; steps < 1000; ++steps) {
    pfr::backward(pfr::sum(pfr::square(pfr::sub(w, t))));
    opt.step(params, 0.05);
    double err = 0.0;
    for (std::size_t i = 0; i < 3; ++i) err = std::max(err, std::abs(w.at(i) - target[i]));
    if (err < 1e-6) break;
  }
  EXPECT_LT(steps, 1000u);
}

TEST(Adam, QuadraticBowlConverges) {
  auto w = Tensor::zeros({2}, true);
  const auto t = Tensor::from_data({2}, {0.5, -0.5});
  pfr::Adam<double> opt;
  std::vector<Tensor> params{w};
  for (int s = 0; s < 2000; ++s) {
    pfr::backward(pfr::sum(pfr::square(pfr::sub(w, t))));
    opt.step(params, 0.01);
  }
  EXPECT_NEAR(w.at(0), 0.5, 1e-4);
  EXPECT_NEAR(w.at(1), -0.5, 1e-4);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto w = Tensor::from_data({2}, {1.0, -1.0}, true);
  pfr::Adam<double> opt;
  std::vector<Tensor> params{w};
  pfr::backward(pfr::sum(pfr::mul(w, Tensor::from_data({2}, {3.0, -0.5}))));
  opt.step(params, 0.01);
  EXPECT_NEAR(w.at(0), 0.99, 1e-9);
  EXPECT_NEAR(w.at(1), -0.99, 1e-9);
}

TEST(Schedule, CosineEndpoints) {
  const auto s = pfr::LRSchedule::cosine(0.06, 100, 0.006, 0.4);
  EXPECT_DOUBLE_EQ(s.rate(0), 0.06);
  EXPECT_DOUBLE_EQ(s.rate(100), 0.006);
  EXPECT_DOUBLE_EQ(s.rate(101), 0.4 * 0.006);
  EXPECT_NEAR(s.rate(50), 0.5 * (0.06 + 0.006), 1e-15);
}

TEST(Schedule, CosineIsNonIncreasingAndBounded) {
  const auto s = pfr::LRSchedule::cosine(0.1, 37, 0.001, 0.8);
  for (std::size_t k = 0; k < 60; ++k) {
    EXPECT_GT(s.rate(k), 0.0);
    EXPECT_LE(s.rate(k), 0.1);
    if (k > 0) {
      EXPECT_LE(s.rate(k), s.rate(k - 1));
    }
  }
}

TEST(Schedule, PatienceDecaysAtMostConfiguredTimes) {
  auto s = pfr::LRSchedule::patience(5e-3, 0.3, 5, 3);
  EXPECT_EQ(s.observe(0.5), pfr::LRSchedule::Event::improved);
  int decayed = 0;
  bool exhausted = false;
  for (int i = 0; i < 40 && !exhausted; ++i) {
    const auto e = s.observe(0.1);
    decayed += e == pfr::LRSchedule::Event::decayed;
    exhausted = e == pfr::LRSchedule::Event::exhausted;
  }
  EXPECT_EQ(decayed, 3);
  EXPECT_TRUE(exhausted);
  EXPECT_NEAR(s.rate(0), 5e-3 * 0.027, 1e-15);
}

TEST(Schedule, InvalidConfigurationsThrow) {
  EXPECT_THROW(pfr::LRSchedule::cosine(0.1, 0, 0.01), pfr::ConfigError);
  EXPECT_THROW(pfr::LRSchedule::cosine(0.1, 10, 0.2), pfr::ConfigError);
  EXPECT_THROW(pfr::LRSchedule::constant(0.0), pfr::ConfigError);
  EXPECT_THROW(pfr::LRSchedule::patience(0.1, 1.0, 5, 3), pfr::ConfigError);
  EXPECT_THROW(pfr::LRSchedule::constant(0.1).observe(1.0), pfr::ContractError);
}

TEST(Rng, Determinism) {
  pfr::Rng a(5), b(5), c(6);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
  EXPECT_EQ(pfr::derive_seed(1, 2, 3), pfr::derive_seed(1, 2, 3));
  EXPECT_NE(pfr::derive_seed(1, 2, 3), pfr::derive_seed(1, 3, 2));
}

TEST(Rng, NormalMoments) {
  pfr::Rng rng(17);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Float32, OpsInstantiate) {
  auto a = pfr::TensorF::from_data({2, 2}, {1, 2, 3, 4}, true);
  pfr::backward(pfr::sum(pfr::square(pfr::matmul(a, a))));
  EXPECT_TRUE(pfr::all_finite<float>(a.grad()));
}

}  // namespace
