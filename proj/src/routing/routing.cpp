#include "capsgram/routing/routing.hpp"

#include <cmath>
#include <string>

#include "capsgram/error.hpp"
#include "capsgram/tensor/autograd.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

CapsuleField::CapsuleField(Tensor v) : values(std::move(v)) {
  if (values.rank() != 4) {
    throw ShapeError("capsule field must be [n_types,dim,H,W], got " +
                     shape_to_string(values.shape()));
  }
}

PredictionStack::PredictionStack(Tensor v) : values(std::move(v)) {
  if (values.rank() != 5) {
    throw ShapeError("prediction stack must be [n_in,n_out,dim,H,W], got " +
                     shape_to_string(values.shape()));
  }
}

const Tensor& RoutingTrace::final_coefficients() const {
  if (coefficients.empty()) throw std::logic_error("empty routing trace");
  return coefficients.back();
}

Tensor squash(const Tensor& v, std::size_t axis, Real epsilon) {
  if (axis >= v.rank()) {
    throw ShapeError("squash: axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(v.shape()));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= v.dim(i);
  for (std::size_t i = axis + 1; i < v.rank(); ++i) inner *= v.dim(i);
  const std::size_t extent = v.dim(axis);
  const Real eps2 = epsilon * epsilon;

  const auto x = v.data();
  std::vector<Real> out(x.size());
  std::vector<Real> norms(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      Real acc = 0.0;
      for (std::size_t k = 0; k < extent; ++k) acc += x[base + k * inner] * x[base + k * inner];
      const Real n = std::sqrt(acc + eps2);
      norms[o * inner + in] = n;
      const Real factor = n / (1.0 + n * n);
      for (std::size_t k = 0; k < extent; ++k) out[base + k * inner] = factor * x[base + k * inner];
    }
  }
  return autograd::make_result(
      "squash", v.shape(), std::move(out), {v},
      [v, norms = std::move(norms), outer, inner, extent](
          std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        // d out / d x = s(n) I + (s'(n) / n) x x^T, s(n) = n / (1 + n^2)
        Real* gx = sink(0);
        const auto x = v.data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * extent * inner + in;
            const Real n = norms[o * inner + in];
            const Real d = 1.0 + n * n;
            const Real s = n / d;
            const Real ds_over_n = (1.0 - n * n) / (d * d) / n;
            Real gdotx = 0.0;
            for (std::size_t k = 0; k < extent; ++k) gdotx += g[base + k * inner] * x[base + k * inner];
            for (std::size_t k = 0; k < extent; ++k) {
              const std::size_t i = base + k * inner;
              gx[i] += s * g[i] + ds_over_n * gdotx * x[i];
            }
          }
        }
      });
}

PredictionStack predict(const CapsuleField& input, const Tensor& filters, std::size_t stride,
                        std::size_t padding) {
  if (filters.rank() != 5) {
    throw ShapeError("predict: filters must be [n_out,dim_out,dim_in,kH,kW], got " +
                     shape_to_string(filters.shape()));
  }
  if (filters.dim(2) != input.dim()) {
    throw ShapeError("predict: filter input dim " + std::to_string(filters.dim(2)) +
                     " differs from capsule dim " + std::to_string(input.dim()));
  }
  const std::size_t n_out = filters.dim(0);
  const std::size_t dim_out = filters.dim(1);
  auto bank = reshape(filters, {n_out * dim_out, filters.dim(2), filters.dim(3), filters.dim(4)});
  // input types act as the batch axis
  auto raw = correlate2d(input.values, bank, stride, padding);
  return PredictionStack(
      reshape(raw, {input.n_types(), n_out, dim_out, raw.dim(2), raw.dim(3)}));
}

namespace {

// Coefficient-weighted sum over input types followed by squash.
CapsuleField combine(const PredictionStack& s, const Tensor& coefficients) {
  auto c = reshape(coefficients, {s.n_in(), s.n_out(), 1, s.height(), s.width()});
  auto total = reduce_sum(mul(c, s.values), {0});
  return CapsuleField(squash(total, 1));
}

Tensor agreement(const PredictionStack& s, const CapsuleField& out) {
  auto v = reshape(out.values, {1, s.n_out(), s.dim(), s.height(), s.width()});
  return reduce_sum(mul(s.values, v), {2});
}

}  // namespace

RoutingResult dynamic_route(const PredictionStack& predictions, std::size_t iterations) {
  if (iterations == 0) throw DomainError("dynamic_route: at least one iteration is required");
  const auto& s = predictions;
  RoutingResult result;
  Tensor logits = Tensor::zeros({s.n_in(), s.n_out(), s.height(), s.width()});
  for (std::size_t it = 0; it < iterations; ++it) {
    auto c = softmax(logits, 1);
    result.trace.logits.push_back(logits);
    result.trace.coefficients.push_back(c);
    {
      NoGradGuard no_grad;
      result.trace.entropy_mean.push_back(coefficient_entropy(c).item());
    }
    result.output = combine(s, c);
    if (it + 1 < iterations) logits = add(logits, agreement(s, result.output));
  }
  return result;
}

CapsuleField equal_route(const PredictionStack& predictions) {
  return equal_route_traced(predictions).output;
}

RoutingResult equal_route_traced(const PredictionStack& predictions) {
  const auto& s = predictions;
  const Shape shape{s.n_in(), s.n_out(), s.height(), s.width()};
  Tensor c(shape, 1.0 / static_cast<Real>(s.n_out()));
  RoutingResult result;
  result.trace.logits.push_back(Tensor::zeros(shape));
  result.trace.coefficients.push_back(c);
  result.trace.entropy_mean.push_back(coefficient_entropy(c).item());
  result.output = combine(s, c);
  return result;
}

Tensor coefficient_entropy(const Tensor& coefficients) {
  if (coefficients.rank() != 4) {
    throw ShapeError("coefficient_entropy: expected [n_in,n_out,H,W], got " +
                     shape_to_string(coefficients.shape()));
  }
  auto terms = mul(coefficients, log(add_scalar(coefficients, kEntropyGuard)));
  return scale(mean(reduce_sum(terms, {1})), -1.0);
}

Tensor routing_entropy(const RoutingTrace& trace) {
  return coefficient_entropy(trace.final_coefficients());
}

}  // namespace capsgram
