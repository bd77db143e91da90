#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "capsgram/equivariant/layers.hpp"
#include "capsgram/error.hpp"

namespace capsgram {

Geometry Geometry::then(const Geometry& next) const {
  Geometry g;
  g.kernel_h = kernel_h + (next.kernel_h - 1) * stride;
  g.kernel_w = kernel_w + (next.kernel_w - 1) * stride;
  g.stride = stride * next.stride;
  g.padding = padding + next.padding * stride;
  return g;
}

Tensor translate(const Tensor& grid, Shift shift) {
  if (grid.rank() < 2) throw ShapeError("translate: need at least two axes");
  const std::size_t H = grid.dim(grid.rank() - 2);
  const std::size_t W = grid.dim(grid.rank() - 1);
  const std::size_t planes = grid.numel() / (H * W);
  std::vector<Real> out(grid.numel(), 0.0);
  const auto x = grid.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < H; ++y) {
      const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) - shift.dy;
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
      for (std::size_t xx = 0; xx < W; ++xx) {
        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx) - shift.dx;
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
        out[(p * H + y) * W + xx] = x[(p * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)];
      }
    }
  }
  return Tensor(grid.shape(), std::move(out));
}

namespace {

// Output coordinate range [lo, hi) along one axis where the receptive field
// [o*s - p, o*s - p + k) stays inside [0, n) and inside [shift, n + shift).
std::pair<std::ptrdiff_t, std::ptrdiff_t> interior(std::size_t n, std::size_t k, std::size_t s,
                                                   std::size_t p, std::ptrdiff_t shift,
                                                   std::size_t n_out) {
  const auto N = static_cast<std::ptrdiff_t>(n);
  const auto K = static_cast<std::ptrdiff_t>(k);
  const auto S = static_cast<std::ptrdiff_t>(s);
  const auto P = static_cast<std::ptrdiff_t>(p);
  const std::ptrdiff_t first = std::max<std::ptrdiff_t>(0, shift);
  const std::ptrdiff_t last = std::min<std::ptrdiff_t>(N, N + shift);  // exclusive
  std::ptrdiff_t lo = 0;
  while (lo * S - P < first) ++lo;
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(n_out);
  while (hi > lo && (hi - 1) * S - P + K > last) --hi;
  // the matching unshifted position must exist too
  const std::ptrdiff_t off = shift / S;
  lo = std::max(lo, off);
  hi = std::min(hi, static_cast<std::ptrdiff_t>(n_out) + off);
  return {lo, std::max(lo, hi)};
}

}  // namespace

Real check_translation_equivariance(const GridMap& layer, const Geometry& geometry,
                                    const Tensor& input, Shift shift) {
  const auto s = static_cast<std::ptrdiff_t>(geometry.stride);
  if (shift.dy % s != 0 || shift.dx % s != 0) {
    throw std::invalid_argument("equivariance check: shift must be a multiple of the stride " +
                                std::to_string(geometry.stride));
  }
  const Tensor base = layer(input);
  const Tensor moved = layer(translate(input, shift));
  if (base.shape() != moved.shape() || base.rank() < 2) {
    throw ShapeError("equivariance check: layer output shape depends on the input values");
  }
  const std::size_t H = input.dim(input.rank() - 2);
  const std::size_t W = input.dim(input.rank() - 1);
  const std::size_t Ho = base.dim(base.rank() - 2);
  const std::size_t Wo = base.dim(base.rank() - 1);
  const auto [y0, y1] = interior(H, geometry.kernel_h, geometry.stride, geometry.padding, shift.dy, Ho);
  const auto [x0, x1] = interior(W, geometry.kernel_w, geometry.stride, geometry.padding, shift.dx, Wo);
  if (y0 >= y1 || x0 >= x1) {
    throw std::invalid_argument("equivariance check: no output position is unaffected by the borders");
  }
  const std::ptrdiff_t oy = shift.dy / s;
  const std::ptrdiff_t ox = shift.dx / s;
  const std::size_t planes = base.numel() / (Ho * Wo);
  Real worst = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::ptrdiff_t y = y0; y < y1; ++y) {
      for (std::ptrdiff_t x = x0; x < x1; ++x) {
        const Real a = moved[(p * Ho + static_cast<std::size_t>(y)) * Wo + static_cast<std::size_t>(x)];
        const Real b = base[(p * Ho + static_cast<std::size_t>(y - oy)) * Wo + static_cast<std::size_t>(x - ox)];
        worst = std::max(worst, std::abs(a - b));
      }
    }
  }
  return worst;
}

Real check_translation_equivariance(const FeatureField& field, const Tensor& kernels,
                                    std::size_t stride, std::size_t padding,
                                    Activation activation, Shift shift) {
  const Geometry g{kernels.dim(2), kernels.dim(3), stride, padding};
  return check_translation_equivariance(
      [&](const Tensor& x) {
        return conv_layer(FeatureField(x), kernels, stride, padding, activation).values;
      },
      g, field.values, shift);
}

Real check_pool_equivariance(const FeatureField& field, std::size_t window, std::size_t stride,
                             Shift shift) {
  const Geometry g{window, window, stride, 0};
  return check_translation_equivariance(
      [&](const Tensor& x) { return max_pool_layer(FeatureField(x), window, stride).values; }, g,
      field.values, shift);
}

}  // namespace capsgram
