#pragma once

#include <cstddef>
#include <vector>

#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

// Binary operations broadcast: operands must have equal rank and every
// extent must either agree or be 1 in one of them.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& t, Real factor);
Tensor add_scalar(const Tensor& t, Real offset);
Tensor square(const Tensor& t);
Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
/// Natural logarithm; non-positive entries raise DomainError with their index.
Tensor log(const Tensor& t);

/// Sum over `axes`. Reduced axes are dropped unless `keepdims`.
Tensor reduce_sum(const Tensor& t, const std::vector<std::size_t>& axes, bool keepdims = false);
Tensor reduce_mean(const Tensor& t, const std::vector<std::size_t>& axes, bool keepdims = false);
/// Sum of every element, as a scalar.
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);

Tensor reshape(const Tensor& t, Shape shape);
/// Sub-tensor at `index` along the leading axis (rank drops by one).
Tensor select(const Tensor& t, std::size_t index);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

/// Max-shifted softmax along `axis`. Non-finite entries raise DomainError.
Tensor softmax(const Tensor& t, std::size_t axis);

/// sqrt(sum of squares + epsilon^2) along `axis`.
Tensor l2_norm(const Tensor& t, std::size_t axis, Real epsilon = 1e-8, bool keepdims = false);

/// Zero-padded correlation. `input` is [C_in,H,W] or a batch [N,C_in,H,W];
/// `kernels` is [C_out,C_in,kH,kW]. Output is [C_out,H',W'] (resp.
/// [N,C_out,H',W']) with H' = (H + 2*padding - kH) / stride + 1.
/// Each output is accumulated over (c, u, v) in row-major order.
Tensor correlate2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
                   std::size_t padding);

/// Window maximum over [C,H,W] followed by subsampling with `stride`.
/// Ties route the gradient to the first maximum in row-major window order.
Tensor max_pool_window(const Tensor& t, std::size_t window, std::size_t stride);

}  // namespace capsgram
