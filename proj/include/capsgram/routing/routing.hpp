#pragma once

#include <cstddef>
#include <vector>

#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

/// Activations of one capsule layer: a `dim`-vector for each of `n_types`
/// capsule types at every grid position. values: [n_types, dim, H, W].
struct CapsuleField {
  Tensor values;

  CapsuleField() = default;
  explicit CapsuleField(Tensor v);

  std::size_t n_types() const { return values.dim(0); }
  std::size_t dim() const { return values.dim(1); }
  std::size_t height() const { return values.dim(2); }
  std::size_t width() const { return values.dim(3); }
};

/// Predictions of every input type for every output type.
/// values: [n_in, n_out, dim, H, W].
struct PredictionStack {
  Tensor values;

  PredictionStack() = default;
  explicit PredictionStack(Tensor v);

  std::size_t n_in() const { return values.dim(0); }
  std::size_t n_out() const { return values.dim(1); }
  std::size_t dim() const { return values.dim(2); }
  std::size_t height() const { return values.dim(3); }
  std::size_t width() const { return values.dim(4); }
};

/// Per-iteration state of one routing call. coefficients[t] and logits[t]
/// are [n_in, n_out, H, W]; logits[t] is what produced coefficients[t], so
/// logits[0] is all zero. The tensors stay attached to the graph.
struct RoutingTrace {
  std::vector<Tensor> coefficients;
  std::vector<Tensor> logits;
  std::vector<Real> entropy_mean;  // nats, one per iteration

  std::size_t iterations() const { return coefficients.size(); }
  const Tensor& final_coefficients() const;
};

struct RoutingResult {
  CapsuleField output;
  RoutingTrace trace;
};

constexpr std::size_t kDefaultRoutingIterations = 3;
constexpr Real kNormEpsilon = 1e-8;
constexpr Real kEntropyGuard = 1e-12;

/// (|v| / (1 + |v|^2)) v along `axis`, with |v| = sqrt(sum v^2 + eps^2).
Tensor squash(const Tensor& v, std::size_t axis, Real epsilon = kNormEpsilon);

/// Correlates every input type with every output type's filter bank.
/// `filters` is [n_out, dim_out, dim_in, kH, kW]; bank j is shared by all
/// input types.
PredictionStack predict(const CapsuleField& input, const Tensor& filters, std::size_t stride,
                        std::size_t padding);

/// Routing by agreement: softmax over output types of zero-initialised
/// logits, coefficient-weighted sum over input types, squash, then logits
/// += prediction . output. Gradients flow through every iteration.
RoutingResult dynamic_route(const PredictionStack& predictions,
                            std::size_t iterations = kDefaultRoutingIterations);

/// Uniform coefficients 1/n_out, one weighted sum and squash.
CapsuleField equal_route(const PredictionStack& predictions);
/// equal_route plus the (single-iteration, uniform) trace it implies.
RoutingResult equal_route_traced(const PredictionStack& predictions);

/// Mean over (i, g) of -sum_j c_ij(g) ln(c_ij(g) + 1e-12), for
/// coefficients [n_in, n_out, H, W]. Differentiable.
Tensor coefficient_entropy(const Tensor& coefficients);
/// coefficient_entropy of the final iteration.
Tensor routing_entropy(const RoutingTrace& trace);

}  // namespace capsgram
