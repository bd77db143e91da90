#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace capsgram {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);
/// Formats the multi-index of flat offset `flat` within `shape`, e.g. "[0,2,1]".
std::string index_to_string(const Shape& shape, std::size_t flat);

namespace detail {
struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  // Empty until a gradient is first accumulated.
  std::vector<Real> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};
}  // namespace detail

/// Dense row-major tensor of wide-precision reals with reverse-mode
/// differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage. Results of
/// differentiable operations record how they were produced whenever an input
/// requires a gradient and recording is enabled (see NoGradGuard). Calling
/// backward() on a scalar walks that record in reverse topological order and
/// accumulates into the `grad` of every leaf that requires one. Leaf
/// gradients accumulate across backward() calls until zero_grad().
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(Real value) { return Tensor(Shape{}, value); }
  static Tensor from(std::initializer_list<Real> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const Real> data() const { return impl_->data; }
  /// Mutable access, for leaves only: initialisation and optimiser updates.
  std::span<Real> mutable_data();
  Real item() const;
  Real at(std::initializer_list<std::size_t> index) const;
  Real operator[](std::size_t flat) const { return impl_->data[flat]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  /// Gradient as a fresh constant tensor (zeros when none accumulated yet).
  Tensor grad_tensor() const;
  void zero_grad();

  /// Reverse pass from this scalar. Throws ShapeError for non-scalars.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording for its lifetime (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

}  // namespace capsgram
