#include "capsgram/tensor/autograd.hpp"

#include <unordered_set>
#include <utility>

namespace capsgram::autograd {

Real* GradSink::operator()(std::size_t i) const {
  auto& impl = *inputs_[i];
  if (!impl.requires_grad) return nullptr;
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad.data();
}

Tensor make_result(const char* name, Shape shape, std::vector<Real> values,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!grad_mode_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;

  auto node = std::make_shared<capsgram::detail::Node>();
  node->name = name;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  out.impl()->grad_fn = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

std::vector<std::shared_ptr<capsgram::detail::TensorImpl>> topological_order(const Tensor& root) {
  using Impl = capsgram::detail::TensorImpl;
  std::vector<std::shared_ptr<Impl>> order;
  std::unordered_set<const Impl*> visited;
  // Iterative post-order DFS; (tensor, next input to visit).
  std::vector<std::pair<std::shared_ptr<Impl>, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto* node = impl->grad_fn.get();
    if (node && next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }
  return order;
}

}  // namespace capsgram::autograd
