#include <cmath>
#include <string>

#include "capsgram/error.hpp"
#include "capsgram/tensor/autograd.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
  bool same = false;
};

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size());
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i] = s;
    s *= shape[i];
  }
  return strides;
}

Broadcast broadcast_shapes(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_to_string(a) + " vs " +
                     shape_to_string(b));
  }
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  bc.out.resize(a.size());
  bc.a_strides.resize(a.size());
  bc.b_strides.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_to_string(a) + " with " +
                       shape_to_string(b));
    }
    bc.out[i] = std::max(a[i], b[i]);
    bc.a_strides[i] = a[i] == 1 ? 0 : sa[i];
    bc.b_strides[i] = b[i] == 1 ? 0 : sb[i];
  }
  return bc;
}

// Calls fn(out_index, a_index, b_index) for every output element in row-major
// order.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
  const std::size_t n = shape_numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  if (n == 0) return;
  if (rank == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t inner = bc.out[rank - 1];
  const std::size_t as = bc.a_strides[rank - 1];
  const std::size_t bs = bc.b_strides[rank - 1];
  std::size_t o = 0;
  std::size_t ai = 0;
  std::size_t bi = 0;
  while (o < n) {
    for (std::size_t k = 0; k < inner; ++k) fn(o + k, ai + k * as, bi + k * bs);
    o += inner;
    // advance the odometer over the outer axes
    std::size_t axis = rank - 1;
    while (axis-- > 0) {
      ++idx[axis];
      ai += bc.a_strides[axis];
      bi += bc.b_strides[axis];
      if (idx[axis] < bc.out[axis]) break;
      ai -= bc.a_strides[axis] * idx[axis];
      bi -= bc.b_strides[axis] * idx[axis];
      idx[axis] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const char* name, BinaryKind kind, const Tensor& a, const Tensor& b) {
  const auto bc = broadcast_shapes(name, a.shape(), b.shape());
  std::vector<Real> out(shape_numel(bc.out));
  const auto x = a.data();
  const auto y = b.data();
  switch (kind) {
    case BinaryKind::kAdd:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] + y[j]; });
      break;
    case BinaryKind::kSub:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] - y[j]; });
      break;
    case BinaryKind::kMul:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] * y[j]; });
      break;
    case BinaryKind::kDiv:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] / y[j]; });
      break;
  }
  return autograd::make_result(
      name, bc.out, std::move(out), {a, b},
      [a, b, bc, kind](std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* ga = sink(0);
        Real* gb = sink(1);
        const auto x = a.data();
        const auto y = b.data();
        switch (kind) {
          case BinaryKind::kAdd:
            for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) {
              if (ga) ga[i] += g[o];
              if (gb) gb[j] += g[o];
            });
            break;
          case BinaryKind::kSub:
            for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) {
              if (ga) ga[i] += g[o];
              if (gb) gb[j] -= g[o];
            });
            break;
          case BinaryKind::kMul:
            for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) {
              if (ga) ga[i] += g[o] * y[j];
              if (gb) gb[j] += g[o] * x[i];
            });
            break;
          case BinaryKind::kDiv:
            for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) {
              if (ga) ga[i] += g[o] / y[j];
              if (gb) gb[j] -= g[o] * x[i] / (y[j] * y[j]);
            });
            break;
        }
      });
}

// Unary map with derivative expressed through input x and output y.
template <typename F, typename D>
Tensor unary(const char* name, const Tensor& t, F f, D dfdx) {
  const auto x = t.data();
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return autograd::make_result(
      name, t.shape(), std::move(out), {t},
      [t, dfdx](std::span<const Real> y, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gx = sink(0);
        const auto x = t.data();
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
      });
}

void check_axis(const char* op, const Tensor& t, std::size_t axis) {
  if (axis >= t.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_to_string(t.shape()));
  }
}

// Splits `shape` around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinaryKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinaryKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinaryKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", BinaryKind::kDiv, a, b); }

Tensor scale(const Tensor& t, Real factor) {
  return unary(
      "scale", t, [factor](Real x) { return x * factor; },
      [factor](Real, Real) { return factor; });
}

Tensor add_scalar(const Tensor& t, Real offset) {
  return unary(
      "add_scalar", t, [offset](Real x) { return x + offset; }, [](Real, Real) { return 1.0; });
}

Tensor square(const Tensor& t) {
  return unary(
      "square", t, [](Real x) { return x * x; }, [](Real x, Real) { return 2.0 * x; });
}

Tensor relu(const Tensor& t) {
  return unary(
      "relu", t, [](Real x) { return x > 0.0 ? x : 0.0; },
      [](Real x, Real) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& t) {
  return unary(
      "sigmoid", t,
      [](Real x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const Real e = std::exp(x);
        return e / (1.0 + e);
      },
      [](Real, Real y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& t) {
  const auto x = t.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x[i]) + " at index " +
                        index_to_string(t.shape(), i));
    }
  }
  return unary(
      "log", t, [](Real v) { return std::log(v); }, [](Real v, Real) { return 1.0 / v; });
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw ShapeError("reshape: " + shape_to_string(t.shape()) + " to " + shape_to_string(shape));
  }
  std::vector<Real> values(t.data().begin(), t.data().end());
  return autograd::make_result(
      "reshape", std::move(shape), std::move(values), {t},
      [](std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gx = sink(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
}

Tensor select(const Tensor& t, std::size_t index) {
  if (t.rank() == 0 || index >= t.dim(0)) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for shape " +
                     shape_to_string(t.shape()));
  }
  Shape shape(t.shape().begin() + 1, t.shape().end());
  const std::size_t block = shape_numel(shape);
  const std::size_t offset = index * block;
  std::vector<Real> values(t.data().begin() + offset, t.data().begin() + offset + block);
  return autograd::make_result(
      "select", std::move(shape), std::move(values), {t},
      [offset](std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gx = sink(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
      });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  const Shape& inner = parts.front().shape();
  std::vector<Real> values;
  values.reserve(parts.size() * shape_numel(inner));
  for (const auto& p : parts) {
    if (p.shape() != inner) {
      throw ShapeError("stack: shape " + shape_to_string(p.shape()) + " differs from " +
                       shape_to_string(inner));
    }
    values.insert(values.end(), p.data().begin(), p.data().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  const std::size_t block = shape_numel(inner);
  const std::size_t count = parts.size();
  return autograd::make_result(
      "stack", std::move(shape), std::move(values), parts,
      [block, count](std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        for (std::size_t p = 0; p < count; ++p) {
          Real* gx = sink(p);
          if (!gx) continue;
          for (std::size_t i = 0; i < block; ++i) gx[i] += g[p * block + i];
        }
      });
}

Tensor softmax(const Tensor& t, std::size_t axis) {
  check_axis("softmax", t, axis);
  const auto x = t.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw DomainError("softmax: non-finite logit at index " + index_to_string(t.shape(), i));
    }
  }
  const auto s = split_at(t.shape(), axis);
  std::vector<Real> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      Real peak = x[base];
      for (std::size_t k = 1; k < s.extent; ++k) peak = std::max(peak, x[base + k * s.inner]);
      Real total = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const Real e = std::exp(x[base + k * s.inner] - peak);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
    }
  }
  return autograd::make_result(
      "softmax", t.shape(), std::move(out), {t},
      [s](std::span<const Real> y, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gx = sink(0);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            Real dot = 0.0;
            for (std::size_t k = 0; k < s.extent; ++k) {
              dot += g[base + k * s.inner] * y[base + k * s.inner];
            }
            for (std::size_t k = 0; k < s.extent; ++k) {
              const std::size_t i = base + k * s.inner;
              gx[i] += y[i] * (g[i] - dot);
            }
          }
        }
      });
}

Tensor l2_norm(const Tensor& t, std::size_t axis, Real epsilon, bool keepdims) {
  check_axis("l2_norm", t, axis);
  const auto x = t.data();
  const auto s = split_at(t.shape(), axis);
  std::vector<Real> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      Real acc = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const Real v = x[base + k * s.inner];
        acc += v * v;
      }
      out[o * s.inner + in] = std::sqrt(acc + epsilon * epsilon);
    }
  }
  Shape shape = t.shape();
  if (keepdims) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return autograd::make_result(
      "l2_norm", std::move(shape), std::move(out), {t},
      [t, s](std::span<const Real> n, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gx = sink(0);
        const auto x = t.data();
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t r = o * s.inner + in;
            const Real factor = g[r] / n[r];
            const std::size_t base = o * s.extent * s.inner + in;
            for (std::size_t k = 0; k < s.extent; ++k) {
              gx[base + k * s.inner] += factor * x[base + k * s.inner];
            }
          }
        }
      });
}

}  // namespace capsgram
