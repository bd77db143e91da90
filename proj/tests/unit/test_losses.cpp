#include <gtest/gtest.h>

#include <cmath>

#include "capsgram/error.hpp"
#include "capsgram/losses/losses.hpp"
#include "capsgram/tensor/grad_check.hpp"
#include "capsgram/tensor/ops.hpp"
#include "capsgram/tensor/random.hpp"
#include "oracles.hpp"

namespace capsgram {
namespace {

// Builds a one-layer trace whose final coefficients are `c`.
RoutingTrace trace_of(Tensor c) {
  RoutingTrace t;
  t.logits.push_back(Tensor::zeros(c.shape()));
  t.coefficients.push_back(std::move(c));
  t.entropy_mean.push_back(0.0);
  return t;
}

Tensor uniform_coefficients(std::size_t n_in, std::size_t n_out) {
  return Tensor({n_in, n_out, 2, 2}, 1.0 / static_cast<Real>(n_out));
}

TEST(MarginLoss, BothHingesInactive) {
  EXPECT_DOUBLE_EQ(margin_loss(Tensor::from({0.9, 0.1}), 0).item(), 0.0);
}

TEST(MarginLoss, SilentTarget) {
  EXPECT_NEAR(margin_loss(Tensor::from({0.0, 0.0}), 0).item(), 0.81, 1e-15);
}

TEST(MarginLoss, BothHingesActive) {
  EXPECT_NEAR(margin_loss(Tensor::from({0.5, 0.5}), 0).item(), 0.24, 1e-15);
}

TEST(MarginLoss, CustomConstants) {
  MarginParams p{0.8, 0.2, 1.0};
  // (0.8-0.5)^2 + (0.5-0.2)^2
  EXPECT_NEAR(margin_loss(Tensor::from({0.5, 0.5}), 1, p).item(), 0.18, 1e-15);
}

TEST(MarginLoss, RejectsBadTargetAndShape) {
  EXPECT_THROW(margin_loss(Tensor::from({0.5, 0.5}), 2), DomainError);
  EXPECT_THROW(margin_loss(Tensor::from({0.5}), 0), ShapeError);
  EXPECT_THROW(margin_loss(Tensor::zeros({2, 2}), 0), ShapeError);
}

TEST(MarginLoss, NonNegativeAndZeroOnlyWhenSeparated) {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t K = 2 + rng.below(4);
    std::vector<Real> a(K);
    for (auto& v : a) v = rng.uniform() * 0.999;
    const std::size_t target = rng.below(K);
    const Real loss = margin_loss(Tensor({K}, a), target).item();
    ASSERT_GE(loss, 0.0);
    bool separated = a[target] >= 0.9;
    for (std::size_t k = 0; k < K; ++k) {
      if (k != target && a[k] > 0.1) separated = false;
    }
    ASSERT_EQ(loss == 0.0, separated);
  }
}

TEST(MarginLoss, GradientMatchesFiniteDifference) {
  // keep away from the hinge corners
  auto point = Tensor::from({0.4, 0.7, 0.3});
  EXPECT_LT(grad_check([](const Tensor& a) { return margin_loss(a, 1); }, point), 1e-6);
}

TEST(CrossEntropy, KnownValues) {
  EXPECT_NEAR(cross_entropy(Tensor::from({0.0, 0.0}), 1).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::from({1000.0, 0.0, 0.0}), 0).item(), 0.0, 1e-12);
  EXPECT_THROW(cross_entropy(Tensor::from({0.0, 0.0}), 5), DomainError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifference) {
  Rng rng(3);
  auto point = oracle::random_tensor(rng, {4});
  EXPECT_LT(grad_check([](const Tensor& z) { return cross_entropy(z, 2); }, point), 1e-7);
}

TEST(EntropyLoss, OneHotLayersGiveZero) {
  Tensor c({3, 2, 2, 2}, 0.0);
  auto d = c.mutable_data();
  for (std::size_t i = 0; i < d.size(); i += 8) {
    for (std::size_t g = 0; g < 4; ++g) d[i + g] = 1.0;
  }
  EXPECT_NEAR(entropy_loss({trace_of(c), trace_of(c)}).item(), 0.0, 1e-10);
}

TEST(EntropyLoss, TwoUniformLayers) {
  const Real got =
      entropy_loss({trace_of(uniform_coefficients(3, 4)), trace_of(uniform_coefficients(5, 4))}).item();
  EXPECT_NEAR(got, 2.0 * std::log(4.0), 1e-10);
  EXPECT_NEAR(got, 2.77259, 5e-6);
}

TEST(EntropyLoss, SingleBinaryLayer) {
  EXPECT_NEAR(entropy_loss({trace_of(uniform_coefficients(2, 2))}).item(), 0.69315, 5e-6);
}

TEST(EntropyLoss, EmptyListRejected) {
  EXPECT_THROW(entropy_loss({}), DomainError);
}

TEST(EntropyLoss, NonNegativeOnRandomRouting) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = PredictionStack(oracle::random_tensor(rng, {3, 2, 4, 2, 2}));
    auto r = dynamic_route(s, 3);
    EXPECT_GE(entropy_loss({r.trace}).item(), 0.0);
  }
}

TEST(EntropyLoss, GradientReachesPredictions) {
  Rng rng(8);
  auto point = oracle::random_tensor(rng, {2, 3, 2, 2, 2});
  auto fn = [](const Tensor& p) {
    auto r = dynamic_route(PredictionStack(p), 3);
    return entropy_loss({r.trace});
  };
  EXPECT_LT(grad_check(fn, point), 1e-4);
}

TEST(CombinedLoss, WeightsSelectComponents) {
  auto m = Tensor::scalar(0.24);
  auto e = Tensor::scalar(0.69315);
  EXPECT_DOUBLE_EQ(combined_loss(m, e, {1.0, 0.0}).item(), 0.24);
  EXPECT_DOUBLE_EQ(combined_loss(m, e, {0.0, 1.0}).item(), 0.69315);
  EXPECT_NEAR(combined_loss(m, e, {0.6, 0.4}).item(), 0.42126, 1e-12);
}

TEST(CombinedLoss, ZeroWeightTermGetsNoGradient) {
  Tensor m = Tensor::scalar(0.3);
  Tensor e = Tensor::scalar(0.5);
  m.set_requires_grad(true);
  e.set_requires_grad(true);
  combined_loss(m, e, {1.0, 0.0}).backward();
  EXPECT_DOUBLE_EQ(m.grad()[0], 1.0);
  EXPECT_FALSE(e.has_grad());
}

TEST(CombinedLoss, LinearInBothArguments) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Real w = rng.uniform();
    const LossWeights lw = LossWeights::fixed(w);
    const Real m1 = rng.uniform(), m2 = rng.uniform(), e1 = rng.uniform(), e2 = rng.uniform();
    const Real a = combined_loss(Tensor::scalar(m1 + m2), Tensor::scalar(e1 + e2), lw).item();
    const Real b = combined_loss(Tensor::scalar(m1), Tensor::scalar(e1), lw).item() +
                   combined_loss(Tensor::scalar(m2), Tensor::scalar(e2), lw).item();
    ASSERT_NEAR(a, b, 1e-12);
  }
}

TEST(CombinedLoss, EndToEndGradient) {
  Rng rng(21);
  auto point = oracle::random_tensor(rng, {3, 2, 4, 2, 2});
  auto fn = [](const Tensor& p) {
    auto r = dynamic_route(PredictionStack(p), 3);
    auto act = l2_norm(reshape(reduce_mean(r.output.values, {2, 3}), {2, 4}), 1);
    return combined_loss(margin_loss(act, 0), entropy_loss({r.trace}), {0.6, 0.4});
  };
  EXPECT_LT(grad_check(fn, point), 1e-4);
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(LossWeights::fixed(0.4).validate());
  EXPECT_NEAR(LossWeights::fixed(0.8).w_cls, 0.2, 1e-15);
  EXPECT_THROW((LossWeights{0.7, 0.4}).validate(), DomainError);
  EXPECT_THROW((LossWeights{-0.1, 1.1}).validate(false), DomainError);
  EXPECT_NO_THROW((LossWeights{1.0, 0.5}).validate(false));
}

TEST(Schedule, RampEndpointsAndMidpoint) {
  auto s = presets::ramp_08(50);
  auto first = schedule_weights(0, s);
  EXPECT_DOUBLE_EQ(first.w_cls, 1.0);
  EXPECT_DOUBLE_EQ(first.w_ent, 0.0);
  auto last = schedule_weights(49, s);
  EXPECT_NEAR(last.w_cls, 0.2, 1e-12);
  EXPECT_NEAR(last.w_ent, 0.8, 1e-12);
  EXPECT_NEAR(schedule_weights(25, s).w_ent, 0.8 * 25.0 / 49.0, 1e-15);
  EXPECT_NEAR(schedule_weights(25, s).w_ent, 0.40816, 5e-6);
}

TEST(Schedule, FixedPresets) {
  for (std::size_t e : {0u, 7u, 29u}) {
    EXPECT_NEAR(schedule_weights(e, presets::weight_04(30)).w_ent, 0.4, 1e-15);
    EXPECT_NEAR(schedule_weights(e, presets::weight_08(30)).w_cls, 0.2, 1e-15);
    EXPECT_DOUBLE_EQ(schedule_weights(e, presets::unregularised(30)).w_ent, 0.0);
  }
}

TEST(Schedule, UnweightedVariantKeepsClassWeight) {
  LossSchedule s{ScheduleMode::kRampUnweighted, 0.0, 0.8, 10};
  for (std::size_t e = 0; e < 10; ++e) {
    auto w = schedule_weights(e, s);
    EXPECT_DOUBLE_EQ(w.w_cls, 1.0);
    EXPECT_NO_THROW(w.validate(false));
  }
  EXPECT_NEAR(schedule_weights(9, s).w_ent, 0.8, 1e-12);
}

TEST(Schedule, MonotoneAndNormalised) {
  for (std::size_t total : {1u, 2u, 13u, 50u}) {
    auto s = presets::ramp_08(total);
    Real prev = -1.0;
    for (std::size_t e = 0; e < total; ++e) {
      auto w = schedule_weights(e, s);
      EXPECT_GE(w.w_ent, prev);
      EXPECT_NO_THROW(w.validate());
      prev = w.w_ent;
    }
  }
}

TEST(Schedule, Errors) {
  EXPECT_THROW(schedule_weights(50, presets::ramp_08(50)), DomainError);
  EXPECT_THROW(schedule_weights(0, LossSchedule{ScheduleMode::kLinearRamp, 0.8, 0.2, 5}), DomainError);
  EXPECT_THROW(schedule_weights(0, LossSchedule{ScheduleMode::kFixed, 0.0, 0.0, 0}), DomainError);
  EXPECT_THROW(schedule_mode_from_string("cosine"), DomainError);
  EXPECT_EQ(schedule_mode_from_string(to_string(ScheduleMode::kRampUnweighted)), ScheduleMode::kRampUnweighted);
}

}  // namespace
}  // namespace capsgram
