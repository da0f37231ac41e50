#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "../support/primitive_cases.hpp"
#include "hekp/error.hpp"
#include "hekp/gradcheck.hpp"
#include "hekp/optim.hpp"
#include "hekp/params.hpp"
#include "hekp/tensor.hpp"

using namespace hekp::ad;

namespace {

using primitive_cases::dim;
using primitive_cases::rand_tensor;

}  // namespace

TEST(Tensor, ForwardValues) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  Tensor s = softmax(Tensor::from({2}, {0.0, 0.0}), 0);
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);
  Tensor m = matmul(Tensor::full({2, 3}, 1.0), Tensor::full({3, 1}, 1.0));
  ASSERT_EQ(m.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(m.at(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 3.0);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const hekp::DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2 x 3]"), std::string::npos);
  }
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), hekp::DimensionError);
  EXPECT_THROW(backward(Tensor::zeros({2}, true)), hekp::DimensionError);
}

TEST(Tensor, SumGradIsOnes) {
  Tensor x = Tensor::full({3, 2}, 0.7, true);
  backward(sum_all(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Tensor, SigmoidGradAtZero) {
  Tensor w = Tensor::scalar(0.0, true);
  backward(scalar_mul(sigmoid(w), 3.0));
  EXPECT_DOUBLE_EQ(w.grad()[0], 0.75);
}

TEST(Tensor, TwoConsumersAccumulate) {
  std::mt19937_64 rng(3);
  Tensor x = rand_tensor({3, 2}, rng);
  x.set_requires_grad(true);
  auto f1 = [&] { return sum_all(mul(x, x)); };
  auto f2 = [&] { return sum_all(sigmoid(x)); };
  backward(f1());
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(f2());
  std::vector<double> g2(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(add(f1(), f2()));
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(x.grad()[i], g1[i] + g2[i], 1e-12);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = rand_tensor({dim(rng), dim(rng)}, rng, -20, 20);
    for (std::size_t axis : {0u, 1u}) {
      Tensor s = softmax(a, axis);
      Tensor total = sum(s, axis);
      for (double v : s.data()) EXPECT_GE(v, 0.0);
      for (double v : total.data()) EXPECT_NEAR(v, 1.0, 1e-9);
    }
  }
}

// Each primitive, 20 random shapes and values, analytic against central
// differences.
TEST(Tensor, PrimitiveGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  const auto cases = primitive_cases::all(rng);
  for (const auto& [name, build] : cases) {
    for (int trial = 0; trial < 20; ++trial) {
      auto [f, inputs] = build();
      GradCheckReport r = grad_check(f, inputs, 1e-4);
      ASSERT_TRUE(r.passed) << name << " trial " << trial << ": " << r.worst;
    }
  }
}

TEST(Tensor, ThreeOpChains) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rand_tensor({dim(rng), dim(rng)}, rng);
    Tensor w = rand_tensor({x.cols(), dim(rng)}, rng);
    auto f = [&] { return mean_all(sigmoid(matmul(mul(x, x), w))); };
    EXPECT_TRUE(grad_check(f, {x, w}, 1e-4).passed);
  }
}

TEST(Tensor, DropoutKeepsExpectationAndIdentityAtZero) {
  std::mt19937_64 rng(8);
  Tensor x = Tensor::full({100, 100}, 1.0);
  EXPECT_EQ(dropout(x, 0.0, rng).data()[5], 1.0);
  Tensor y = dropout(x, 0.25, rng);
  double total = 0.0;
  for (double v : y.data()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12);
    total += v;
  }
  EXPECT_NEAR(total / 10000.0, 1.0, 0.05);
}

TEST(GradCheck, ConstantFunctionPasses) {
  Tensor x = Tensor::full({3}, 2.0);
  GradCheckReport r = grad_check([](const Tensor& t) { return add_scalar(scalar_mul(sum_all(t), 0.0), 4.0); },
                                 x, 1e-4);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, SumOfSquaresPasses) {
  std::mt19937_64 rng(9);
  Tensor x = rand_tensor({4, 3}, rng);
  EXPECT_TRUE(grad_check([](const Tensor& t) { return sum_all(mul(t, t)); }, x, 1e-4).passed);
}

TEST(GradCheck, DetectsWrongBackwardRule) {
  std::mt19937_64 rng(13);
  Tensor x = rand_tensor({3, 3}, rng, 0.5, 1.5);
  // Square with a sign-flipped derivative.
  auto bad = [](const Tensor& t) {
    return sum_all(custom_unary(t, [](double v) { return v * v; },
                                [](double v, double) { return -2.0 * v; }, "bad_square"));
  };
  EXPECT_FALSE(grad_check(bad, x, 1e-4).passed);
}

TEST(NoGrad, GuardStopsRecording) {
  Tensor x = Tensor::full({2}, 1.0, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(sigmoid(x).requires_grad());
  }
  EXPECT_TRUE(sigmoid(x).requires_grad());
}

TEST(AdamW, ZeroGradZeroDecayIsIdentity) {
  Tensor p = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  p.zero_grad();
  AdamW opt;
  opt.add_group({p}, {.lr = 0.1, .weight_decay = 0.0});
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    opt.step();
  }
  EXPECT_EQ(p.at(0), 0.5);
  EXPECT_EQ(p.at(1), -1.0);
  EXPECT_EQ(p.at(2), 2.0);
}

TEST(AdamW, MissingGradThrows) {
  Tensor p = Tensor::from({1}, {1.0}, true);
  AdamW opt;
  opt.add_group({p}, {});
  EXPECT_THROW(opt.step(), hekp::Error);
}

TEST(AdamW, MovesAgainstConstantGradientAndZeroesGrad) {
  Tensor p = Tensor::from({2}, {0.0, 0.0}, true);
  AdamW opt;
  opt.add_group({p}, {.lr = 0.01, .weight_decay = 0.0});
  for (int i = 0; i < 50; ++i) {
    auto g = p.mutable_grad();
    g[0] = 0.3;
    g[1] = -2.0;
    opt.step();
    EXPECT_EQ(p.grad()[0], 0.0);
  }
  EXPECT_LT(p.at(0), 0.0);
  EXPECT_GT(p.at(1), 0.0);
  // Adam's normalised step is close to lr per iteration under a constant grad.
  EXPECT_NEAR(p.at(0), -0.5, 1e-6);
}

TEST(AdamW, GroupsUpdateIndependently) {
  auto run = [](double lr, bool with_other) {
    Tensor a = Tensor::from({1}, {1.0}, true);
    Tensor b = Tensor::from({1}, {1.0}, true);
    AdamW opt;
    opt.add_group({a}, {.lr = lr});
    if (with_other) opt.add_group({b}, {.lr = 1e-4});
    for (int i = 0; i < 10; ++i) {
      backward(sum_all(mul(a, a)));
      if (with_other) backward(sum_all(mul(b, b)));
      opt.step();
    }
    return std::pair{a.at(0), b.at(0)};
  };
  const auto [solo, unused] = run(1e-5, false);
  const auto [a, b] = run(1e-5, true);
  EXPECT_EQ(solo, a);
  EXPECT_NE(b, 1.0);
  EXPECT_NE(a, b);
  (void)unused;
}

TEST(ParamStore, ProxyAccumulatesInOrder) {
  ParamStore store;
  store.add("w", Tensor::from({2}, {1.0, 2.0}));
  ParamStore p1 = store.proxy(), p2 = store.proxy();
  backward(sum_all(mul(p1.at("w"), p1.at("w"))));
  backward(sum_all(p2.at("w")));
  store.zero_grad();
  store.accumulate_grads(p1);
  store.accumulate_grads(p2);
  EXPECT_DOUBLE_EQ(store.at("w").grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(store.at("w").grad()[1], 5.0);
  EXPECT_THROW(store.add("w", Tensor::zeros({1})), hekp::Error);
}

TEST(ParamStore, RoundToFloat) {
  ParamStore store;
  store.add("w", Tensor::from({1}, {0.1}));
  store.round_to_float();
  EXPECT_EQ(store.at("w").at(0), static_cast<double>(0.1f));
}
