#pragma once

// Recording surface for differentiable primitives. Library modules build their
// fused operations (squash, losses) on top of this.

#include <functional>
#include <span>
#include <vector>

#include "capsgram/tensor/tensor.hpp"

namespace capsgram::autograd {

/// Hands out gradient accumulators for the inputs of one node during the
/// reverse pass. Buffers are zero-initialised on first request.
class GradSink {
 public:
  explicit GradSink(std::span<const std::shared_ptr<detail::TensorImpl>> inputs)
      : inputs_(inputs) {}
  /// nullptr when input `i` does not take a gradient.
  Real* operator()(std::size_t i) const;

 private:
  std::span<const std::shared_ptr<detail::TensorImpl>> inputs_;
};

/// Reverse rule: receives the forward output values and the incoming
/// gradient, and adds each input's contribution through the sink.
using BackwardFn =
    std::function<void(std::span<const Real> out, std::span<const Real> grad_out, const GradSink& sink)>;

/// Wraps freshly computed values as the result of `name` applied to `inputs`.
/// A node is attached only when recording is enabled and some input requires
/// a gradient.
Tensor make_result(const char* name, Shape shape, std::vector<Real> values,
                   std::vector<Tensor> inputs, BackwardFn backward);

/// Nodes reachable from `root`, in topological order (inputs before users).
std::vector<std::shared_ptr<capsgram::detail::TensorImpl>> topological_order(const Tensor& root);

}  // namespace capsgram::autograd

namespace capsgram::detail {
struct Node {
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  autograd::BackwardFn backward;
};
}  // namespace capsgram::detail
