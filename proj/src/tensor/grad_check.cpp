#include "capsgram/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "capsgram/error.hpp"

namespace capsgram {

namespace {

Real relative_error(Real analytic, Real numeric) {
  const Real denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

Real grad_check(const std::function<Tensor(const Tensor&)>& function, const Tensor& point,
                Real step) {
  Tensor leaf(point.shape(), std::vector<Real>(point.data().begin(), point.data().end()));
  leaf.set_requires_grad(true);
  Tensor loss = function(leaf);
  if (loss.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
  loss.backward();
  const Tensor analytic = leaf.grad_tensor();

  Real worst = 0.0;
  std::vector<Real> probe(point.data().begin(), point.data().end());
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const Real saved = probe[i];
    probe[i] = saved + step;
    const Real up = function(Tensor(point.shape(), probe)).item();
    probe[i] = saved - step;
    const Real down = function(Tensor(point.shape(), probe)).item();
    probe[i] = saved;
    const Real numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

Real grad_check_params(const std::function<Tensor()>& function, std::vector<Tensor> params,
                       Real step, std::size_t max_coords) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = function();
  if (loss.numel() != 1) throw ShapeError("grad_check_params: function must return a scalar");
  loss.backward();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.grad_tensor());
    p.zero_grad();
  }

  Real worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_data();
    const std::size_t n = values.size();
    const std::size_t stride = (max_coords == 0 || n <= max_coords) ? 1 : (n + max_coords - 1) / max_coords;
    for (std::size_t i = 0; i < n; i += stride) {
      const Real saved = values[i];
      values[i] = saved + step;
      const Real up = function().item();
      values[i] = saved - step;
      const Real down = function().item();
      values[i] = saved;
      const Real numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, relative_error(analytic[t][i], numeric));
    }
  }
  return worst;
}

}  // namespace capsgram
