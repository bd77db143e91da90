#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capsgram/routing/routing.hpp"
#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

struct MarginParams {
  Real m_plus = 0.9;
  Real m_minus = 0.1;
  Real lambda_neg = 0.5;
};

/// sum_k [k == target] max(0, m+ - a_k)^2 + lambda [k != target] max(0, a_k - m-)^2
/// over class activations a: [K], K >= 2.
Tensor margin_loss(const Tensor& activations, std::size_t target, const MarginParams& params = {});

/// Softmax cross-entropy of logits [K] against `target`.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

/// Sum over routed layers of each layer's mean routing entropy.
Tensor entropy_loss(const std::vector<RoutingTrace>& traces);

struct LossWeights {
  Real w_cls = 1.0;
  Real w_ent = 0.0;

  /// (1 - w_ent, w_ent).
  static LossWeights fixed(Real w_ent);
  /// Throws DomainError unless both weights lie in [0,1] (and, when
  /// `normalised`, sum to 1).
  void validate(bool normalised = true) const;
};

/// w_cls * margin + w_ent * entropy. A term with zero weight is left out of
/// the graph entirely.
Tensor combined_loss(const Tensor& margin, const Tensor& entropy, const LossWeights& weights);

enum class ScheduleMode {
  kFixed,           // (1 - w_ent_start, w_ent_start) every epoch
  kLinearRamp,      // w_ent ramps start -> end, w_cls = 1 - w_ent
  kRampUnweighted,  // w_ent ramps start -> end, w_cls stays 1
};

struct LossSchedule {
  ScheduleMode mode = ScheduleMode::kFixed;
  Real w_ent_start = 0.0;
  Real w_ent_end = 0.0;
  std::size_t total_epochs = 1;

  void validate() const;
};

LossWeights schedule_weights(std::size_t epoch, const LossSchedule& schedule);

std::string to_string(ScheduleMode mode);
ScheduleMode schedule_mode_from_string(const std::string& name);

namespace presets {
inline LossSchedule unregularised(std::size_t epochs) { return {ScheduleMode::kFixed, 0.0, 0.0, epochs}; }
inline LossSchedule weight_04(std::size_t epochs) { return {ScheduleMode::kFixed, 0.4, 0.4, epochs}; }
inline LossSchedule weight_08(std::size_t epochs) { return {ScheduleMode::kFixed, 0.8, 0.8, epochs}; }
inline LossSchedule ramp_08(std::size_t epochs) { return {ScheduleMode::kLinearRamp, 0.0, 0.8, epochs}; }
}  // namespace presets

}  // namespace capsgram
