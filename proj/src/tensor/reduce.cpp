#include <algorithm>
#include <string>

#include "capsgram/error.hpp"
#include "capsgram/tensor/autograd.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

namespace {

struct Reduction {
  Shape kept;                        // reduced axes set to 1
  Shape out;                         // kept, or with reduced axes dropped
  std::vector<std::size_t> map;      // input flat index -> output flat index
  std::size_t count = 1;             // elements folded into each output
};

Reduction plan(const char* op, const Shape& shape, const std::vector<std::size_t>& axes,
               bool keepdims) {
  Reduction r;
  std::vector<bool> reduced(shape.size(), false);
  for (auto a : axes) {
    if (a >= shape.size()) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(a) +
                       " out of range for shape " + shape_to_string(shape));
    }
    if (reduced[a]) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(a) + " listed twice");
    }
    reduced[a] = true;
  }
  r.kept = shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (reduced[i]) {
      r.kept[i] = 1;
      r.count *= shape[i];
    } else {
      r.out.push_back(shape[i]);
    }
  }
  if (keepdims) r.out = r.kept;

  // output strides in the kept layout, zero along reduced axes
  std::vector<std::size_t> ostride(shape.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    if (!reduced[i]) {
      ostride[i] = s;
      s *= shape[i];
    }
  }
  const std::size_t n = shape_numel(shape);
  r.map.resize(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  std::size_t o = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    r.map[flat] = o;
    for (std::size_t axis = shape.size(); axis-- > 0;) {
      ++idx[axis];
      o += ostride[axis];
      if (idx[axis] < shape[axis]) break;
      o -= ostride[axis] * idx[axis];
      idx[axis] = 0;
    }
  }
  return r;
}

Tensor reduce(const char* name, const Tensor& t, const std::vector<std::size_t>& axes,
              bool keepdims, bool average) {
  auto r = plan(name, t.shape(), axes, keepdims);
  const auto x = t.data();
  std::vector<Real> out(shape_numel(r.out), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[r.map[i]] += x[i];
  const Real factor = average ? 1.0 / static_cast<Real>(r.count) : 1.0;
  if (average) {
    for (auto& v : out) v *= factor;
  }
  auto map = std::make_shared<std::vector<std::size_t>>(std::move(r.map));
  return autograd::make_result(
      name, std::move(r.out), std::move(out), {t},
      [map, factor](std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gx = sink(0);
        const auto& m = *map;
        for (std::size_t i = 0; i < m.size(); ++i) gx[i] += g[m[i]] * factor;
      });
}

}  // namespace

Tensor reduce_sum(const Tensor& t, const std::vector<std::size_t>& axes, bool keepdims) {
  return reduce("reduce_sum", t, axes, keepdims, false);
}

Tensor reduce_mean(const Tensor& t, const std::vector<std::size_t>& axes, bool keepdims) {
  if (t.numel() == 0) throw ShapeError("reduce_mean: empty tensor");
  return reduce("reduce_mean", t, axes, keepdims, true);
}

Tensor sum(const Tensor& t) {
  std::vector<std::size_t> axes(t.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return reduce_sum(t, axes);
}

Tensor mean(const Tensor& t) {
  std::vector<std::size_t> axes(t.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return reduce_mean(t, axes);
}

}  // namespace capsgram
