#include "capsgram/equivariant/layers.hpp"

#include <cmath>
#include <string>

#include "capsgram/error.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

FeatureField::FeatureField(Tensor v) : values(std::move(v)) {
  if (values.rank() != 3 || values.dim(0) == 0 || values.dim(1) == 0 || values.dim(2) == 0) {
    throw ShapeError("feature field must be a non-empty [C,H,W], got " +
                     shape_to_string(values.shape()));
  }
  const auto x = values.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw DomainError("feature field: non-finite value at " + index_to_string(values.shape(), i));
    }
  }
}

FeatureField conv_layer(const FeatureField& field, const Tensor& kernels, std::size_t stride,
                        std::size_t padding, Activation activation,
                        const std::optional<Tensor>& bias) {
  Tensor out = correlate2d(field.values, kernels, stride, padding);
  if (bias) {
    if (bias->rank() != 1 || bias->dim(0) != out.dim(0)) {
      throw ShapeError("conv_layer: bias " + shape_to_string(bias->shape()) + " for " +
                       std::to_string(out.dim(0)) + " output channels");
    }
    out = add(out, reshape(*bias, {out.dim(0), 1, 1}));
  }
  if (activation == Activation::kRelu) out = relu(out);
  return FeatureField(std::move(out));
}

FeatureField max_pool_layer(const FeatureField& field, std::size_t window, std::size_t stride) {
  return FeatureField(max_pool_window(field.values, window, stride));
}

}  // namespace capsgram
