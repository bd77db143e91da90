#include "capsgram/losses/losses.hpp"

#include <cmath>

#include "capsgram/error.hpp"
#include "capsgram/tensor/autograd.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

namespace {

void check_class_vector(const char* op, const Tensor& t, std::size_t target) {
  if (t.rank() != 1 || t.dim(0) < 2) {
    throw ShapeError(std::string(op) + ": expected [K] with K >= 2, got " + shape_to_string(t.shape()));
  }
  if (target >= t.dim(0)) {
    throw DomainError(std::string(op) + ": target " + std::to_string(target) + " out of range for " +
                      std::to_string(t.dim(0)) + " classes");
  }
}

}  // namespace

Tensor margin_loss(const Tensor& activations, std::size_t target, const MarginParams& params) {
  check_class_vector("margin_loss", activations, target);
  const std::size_t K = activations.dim(0);
  Tensor present({K}, 0.0);
  Tensor absent({K}, params.lambda_neg);
  present.mutable_data()[target] = 1.0;
  absent.mutable_data()[target] = 0.0;
  auto pos = square(relu(add_scalar(scale(activations, -1.0), params.m_plus)));
  auto neg = square(relu(add_scalar(activations, -params.m_minus)));
  return sum(add(mul(present, pos), mul(absent, neg)));
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  check_class_vector("cross_entropy", logits, target);
  const auto z = logits.data();
  Real peak = z[0];
  for (Real v : z) peak = std::max(peak, v);
  Real total = 0.0;
  for (Real v : z) total += std::exp(v - peak);
  const Real lse = peak + std::log(total);
  return autograd::make_result(
      "cross_entropy", Shape{}, {lse - z[target]}, {logits},
      [logits, lse, target](std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gz = sink(0);
        const auto z = logits.data();
        for (std::size_t k = 0; k < z.size(); ++k) {
          gz[k] += g[0] * (std::exp(z[k] - lse) - (k == target ? 1.0 : 0.0));
        }
      });
}

Tensor entropy_loss(const std::vector<RoutingTrace>& traces) {
  if (traces.empty()) throw DomainError("entropy_loss: no routed layers");
  Tensor total = routing_entropy(traces.front());
  for (std::size_t l = 1; l < traces.size(); ++l) total = add(total, routing_entropy(traces[l]));
  return total;
}

LossWeights LossWeights::fixed(Real w_ent) { return {1.0 - w_ent, w_ent}; }

void LossWeights::validate(bool normalised) const {
  auto in_unit = [](Real w) { return w >= 0.0 && w <= 1.0; };
  if (!in_unit(w_cls) || !in_unit(w_ent)) {
    throw DomainError("loss weights must lie in [0,1]: w_cls=" + std::to_string(w_cls) +
                      " w_ent=" + std::to_string(w_ent));
  }
  if (normalised && std::abs(w_cls + w_ent - 1.0) > 1e-9) {
    throw DomainError("loss weights must sum to 1: w_cls=" + std::to_string(w_cls) +
                      " w_ent=" + std::to_string(w_ent));
  }
}

Tensor combined_loss(const Tensor& margin, const Tensor& entropy, const LossWeights& weights) {
  if (weights.w_ent == 0.0) return scale(margin, weights.w_cls);
  if (weights.w_cls == 0.0) return scale(entropy, weights.w_ent);
  return add(scale(margin, weights.w_cls), scale(entropy, weights.w_ent));
}

void LossSchedule::validate() const {
  if (total_epochs == 0) throw DomainError("loss schedule: total_epochs must be positive");
  if (w_ent_start < 0.0 || w_ent_end > 1.0 || w_ent_start > w_ent_end) {
    throw DomainError("loss schedule: need 0 <= w_ent_start <= w_ent_end <= 1");
  }
}

LossWeights schedule_weights(std::size_t epoch, const LossSchedule& schedule) {
  schedule.validate();
  if (epoch >= schedule.total_epochs) {
    throw DomainError("schedule_weights: epoch " + std::to_string(epoch) + " outside [0," +
                      std::to_string(schedule.total_epochs) + ")");
  }
  if (schedule.mode == ScheduleMode::kFixed) return LossWeights::fixed(schedule.w_ent_start);
  const Real t = schedule.total_epochs == 1
                     ? 1.0
                     : static_cast<Real>(epoch) / static_cast<Real>(schedule.total_epochs - 1);
  const Real w_ent = schedule.w_ent_start + (schedule.w_ent_end - schedule.w_ent_start) * t;
  if (schedule.mode == ScheduleMode::kRampUnweighted) return {1.0, w_ent};
  return LossWeights::fixed(w_ent);
}

std::string to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::kFixed:
      return "fixed";
    case ScheduleMode::kLinearRamp:
      return "linear_ramp";
    case ScheduleMode::kRampUnweighted:
      return "ramp_unweighted";
  }
  return "fixed";
}

ScheduleMode schedule_mode_from_string(const std::string& name) {
  if (name == "fixed") return ScheduleMode::kFixed;
  if (name == "linear_ramp") return ScheduleMode::kLinearRamp;
  if (name == "ramp_unweighted") return ScheduleMode::kRampUnweighted;
  throw DomainError("unknown loss schedule mode '" + name + "'");
}

}  // namespace capsgram
