#pragma once

#include <functional>
#include <vector>

#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

/// Compares reverse-mode gradients with central differences.
///
/// Returns max over coordinates of |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-8). `function` must be deterministic and
/// build its graph from the tensor it is given.
Real grad_check(const std::function<Tensor(const Tensor&)>& function, const Tensor& point,
                Real step = 1e-5);

/// Same check for a function of several parameter leaves (a model). The
/// parameters are perturbed in place and restored. When `max_coords` is
/// non-zero only every k-th coordinate is probed so that at most that many
/// are visited per parameter.
Real grad_check_params(const std::function<Tensor()>& function, std::vector<Tensor> params,
                       Real step = 1e-5, std::size_t max_coords = 0);

}  // namespace capsgram
