#pragma once

#include <cstddef>
#include <vector>

#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

struct AdamOptions {
  Real learning_rate = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
};

/// Adaptive moment estimation over leaf tensors. step() reads each
/// parameter's accumulated gradient; parameters without one are skipped.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  void step();
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
  std::size_t t_ = 0;
};

}  // namespace capsgram
