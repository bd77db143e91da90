#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

/// A multi-channel function on the translation group, sampled on an H x W
/// grid. values: [channels, H, W].
///
/// Only the 2-D translation group is implemented. A rotation group (p4) would
/// add an orientation axis to the field and rotate the kernels in the
/// correlation; every layer here takes its grid from the field so the
/// interfaces would not change.
struct FeatureField {
  Tensor values;

  FeatureField() = default;
  explicit FeatureField(Tensor v);

  std::size_t channels() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
};

enum class Activation { kNone, kRelu };

/// Correlation (optionally biased) followed by a pointwise activation.
/// `bias`, when given, is [C_out].
FeatureField conv_layer(const FeatureField& field, const Tensor& kernels, std::size_t stride,
                        std::size_t padding, Activation activation,
                        const std::optional<Tensor>& bias = std::nullopt);

/// Max over each window g.U, then restriction to the stride-s subgroup.
FeatureField max_pool_layer(const FeatureField& field, std::size_t window, std::size_t stride);

/// Receptive-field geometry of a layer or a stack of layers.
struct Geometry {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Geometry of `this` followed by `next`.
  Geometry then(const Geometry& next) const;
};

struct Shift {
  std::ptrdiff_t dy = 0;
  std::ptrdiff_t dx = 0;
};

/// Shifts the last two axes by `shift`, filling with zeros.
Tensor translate(const Tensor& grid, Shift shift);

using GridMap = std::function<Tensor(const Tensor&)>;

/// max |layer(translate(x)) - translate(layer(x))| over output positions
/// whose receptive field lies inside both the original and the shifted
/// support (so neither zero padding nor the fill of `translate` is read).
/// The shift must be a multiple of the stride and leave at least one such
/// position, otherwise std::invalid_argument.
Real check_translation_equivariance(const GridMap& layer, const Geometry& geometry,
                                    const Tensor& input, Shift shift);

Real check_translation_equivariance(const FeatureField& field, const Tensor& kernels,
                                    std::size_t stride, std::size_t padding,
                                    Activation activation, Shift shift);
Real check_pool_equivariance(const FeatureField& field, std::size_t window, std::size_t stride,
                             Shift shift);

}  // namespace capsgram
