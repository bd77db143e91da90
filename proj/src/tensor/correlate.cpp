#include <algorithm>
#include <cstring>
#include <limits>
#include <string>

#include "capsgram/error.hpp"
#include "capsgram/tensor/autograd.hpp"
#include "capsgram/tensor/ops.hpp"

namespace capsgram {

namespace {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  bool batched = false;

  std::size_t patch() const { return in_channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
  std::size_t in_block() const { return in_channels * height * width; }
  std::size_t out_block() const { return out_channels * out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, std::size_t stride,
                           std::size_t padding) {
  auto report = [&](const std::string& why) {
    return ShapeError("correlate2d: " + why + " (input " + shape_to_string(input.shape()) +
                      ", kernels " + shape_to_string(kernels.shape()) + ", stride " +
                      std::to_string(stride) + ", padding " + std::to_string(padding) + ")");
  };
  ConvGeometry g;
  if (input.rank() == 4) {
    g.batched = true;
    g.batch = input.dim(0);
  } else if (input.rank() != 3) {
    throw report("input must be [C,H,W] or [N,C,H,W]");
  }
  if (kernels.rank() != 4) throw report("kernels must be [C_out,C_in,kH,kW]");
  if (stride == 0) throw report("stride must be positive");
  const std::size_t off = g.batched ? 1 : 0;
  g.in_channels = input.dim(off);
  g.height = input.dim(off + 1);
  g.width = input.dim(off + 2);
  g.out_channels = kernels.dim(0);
  g.kh = kernels.dim(2);
  g.kw = kernels.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (kernels.dim(1) != g.in_channels) throw report("kernel in-channels differ from input channels");
  if (g.kh == 0 || g.kw == 0) throw report("empty kernel");
  if (g.kh > g.height + 2 * padding || g.kw > g.width + 2 * padding) {
    throw report("kernel larger than padded input");
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;
  return g;
}

// Row-major patch matrix [patch][positions]; zero where the window leaves the input.
void im2col(const ConvGeometry& g, const Real* in, Real* col) {
  const std::size_t P = g.positions();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      for (std::size_t v = 0; v < g.kw; ++v, ++row) {
        Real* dst = col + row * P;
        for (std::size_t y = 0; y < g.out_h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + u) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + v) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            dst[y * g.out_w + x] =
                inside ? in[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                            static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

// Transposed patch matrix [positions][patch].
void im2col_t(const ConvGeometry& g, const Real* in, Real* colt) {
  const std::size_t K = g.patch();
  for (std::size_t y = 0; y < g.out_h; ++y) {
    for (std::size_t x = 0; x < g.out_w; ++x) {
      Real* dst = colt + (y * g.out_w + x) * K;
      std::size_t k = 0;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        for (std::size_t u = 0; u < g.kh; ++u) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + u) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.height);
          for (std::size_t v = 0; v < g.kw; ++v, ++k) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + v) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            dst[k] = row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)
                         ? in[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                              static_cast<std::size_t>(ix)]
                         : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of a transposed patch-gradient matrix back onto the input grid.
void col2im_t(const ConvGeometry& g, const Real* colt, Real* gin) {
  const std::size_t K = g.patch();
  for (std::size_t y = 0; y < g.out_h; ++y) {
    for (std::size_t x = 0; x < g.out_w; ++x) {
      const Real* src = colt + (y * g.out_w + x) * K;
      std::size_t k = 0;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        for (std::size_t u = 0; u < g.kh; ++u) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + u) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.height);
          for (std::size_t v = 0; v < g.kw; ++v, ++k) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + v) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              gin[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                  static_cast<std::size_t>(ix)] += src[k];
            }
          }
        }
      }
    }
  }
}

using Lanes = Real __attribute__((vector_size(64)));
constexpr std::size_t kLanes = sizeof(Lanes) / sizeof(Real);

inline Lanes load_lanes(const Real* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_lanes(Real* p, Lanes v) { std::memcpy(p, &v, sizeof v); }

// C[i][j] (+)= sum_r A(i,r) B[r][j], r ascending, where A(i,r) = a[i*a_row + r*a_red].
// Rows of B and C are contiguous. A 4 x 16 block of C stays in registers
// across the whole reduction; lane arithmetic is the scalar arithmetic.
void gemm(std::size_t M, std::size_t N, std::size_t R, const Real* a, std::size_t a_row,
          std::size_t a_red, const Real* b, std::size_t ldb, Real* c, std::size_t ldc, bool accumulate) {
  constexpr std::size_t MR = 4;
  constexpr std::size_t NR = 2 * kLanes;
  std::size_t i = 0;
  for (; i + MR <= M; i += MR) {
    std::size_t j = 0;
    for (; j + NR <= N; j += NR) {
      Lanes acc[MR][2] = {};
      for (std::size_t r = 0; r < R; ++r) {
        const Lanes b0 = load_lanes(b + r * ldb + j);
        const Lanes b1 = load_lanes(b + r * ldb + j + kLanes);
        for (std::size_t ii = 0; ii < MR; ++ii) {
          const Real av = a[(i + ii) * a_row + r * a_red];
          acc[ii][0] += av * b0;
          acc[ii][1] += av * b1;
        }
      }
      for (std::size_t ii = 0; ii < MR; ++ii) {
        Real* crow = c + (i + ii) * ldc + j;
        for (std::size_t h = 0; h < 2; ++h) {
          store_lanes(crow + h * kLanes, accumulate ? load_lanes(crow + h * kLanes) + acc[ii][h] : acc[ii][h]);
        }
      }
    }
    for (; j + kLanes <= N; j += kLanes) {
      Lanes acc[MR] = {};
      for (std::size_t r = 0; r < R; ++r) {
        const Lanes b0 = load_lanes(b + r * ldb + j);
        for (std::size_t ii = 0; ii < MR; ++ii) acc[ii] += a[(i + ii) * a_row + r * a_red] * b0;
      }
      for (std::size_t ii = 0; ii < MR; ++ii) {
        Real* crow = c + (i + ii) * ldc + j;
        store_lanes(crow, accumulate ? load_lanes(crow) + acc[ii] : acc[ii]);
      }
    }
    for (; j < N; ++j) {
      for (std::size_t ii = 0; ii < MR; ++ii) {
        Real acc = 0.0;
        for (std::size_t r = 0; r < R; ++r) acc += a[(i + ii) * a_row + r * a_red] * b[r * ldb + j];
        Real& dst = c[(i + ii) * ldc + j];
        dst = accumulate ? dst + acc : acc;
      }
    }
  }
  std::vector<Real> acc(N);
  for (; i < M; ++i) {
    Real* crow = c + i * ldc;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      const Real av = a[i * a_row + r * a_red];
      const Real* brow = b + r * ldb;
      for (std::size_t j = 0; j < N; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < N; ++j) crow[j] = accumulate ? crow[j] + acc[j] : acc[j];
  }
}

}  // namespace

Tensor correlate2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
                   std::size_t padding) {
  const auto g = conv_geometry(input, kernels, stride, padding);
  const std::size_t K = g.patch();
  const std::size_t P = g.positions();
  std::vector<Real> out(g.batch * g.out_block());
  std::vector<Real> col(K * P);
  const Real* in = input.data().data();
  const Real* w = kernels.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, in + n * g.in_block(), col.data());
    // out[o][p] = sum_k w[o][k] col[k][p]
    gemm(g.out_channels, P, K, w, K, 1, col.data(), P, out.data() + n * g.out_block(), P, false);
  }
  Shape shape{g.out_channels, g.out_h, g.out_w};
  if (g.batched) shape.insert(shape.begin(), g.batch);

  return autograd::make_result(
      "correlate2d", std::move(shape), std::move(out), {input, kernels},
      [input, kernels, g](std::span<const Real>, std::span<const Real> grad,
                          const autograd::GradSink& sink) {
        Real* gin = sink(0);
        Real* gw = sink(1);
        const std::size_t K = g.patch();
        const std::size_t P = g.positions();
        const std::size_t O = g.out_channels;
        const Real* in = input.data().data();
        const Real* w = kernels.data().data();
        std::vector<Real> colt(P * K);
        std::vector<Real> gcolt;
        if (gin) gcolt.resize(P * K);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const Real* gout = grad.data() + n * g.out_block();
          if (gw) {
            // gw[o][k] += sum_p gout[o][p] colt[p][k]
            im2col_t(g, in + n * g.in_block(), colt.data());
            gemm(O, K, P, gout, P, 1, colt.data(), K, gw, K, true);
          }
          if (gin) {
            // gcolt[p][k] = sum_o gout[o][p] w[o][k]
            gemm(P, K, O, gout, 1, P, w, K, gcolt.data(), K, false);
            col2im_t(g, gcolt.data(), gin + n * g.in_block());
          }
        }
      });
}

Tensor max_pool_window(const Tensor& t, std::size_t window, std::size_t stride) {
  if (t.rank() != 3) {
    throw ShapeError("max_pool_window: expected [C,H,W], got " + shape_to_string(t.shape()));
  }
  if (window == 0 || stride == 0) throw ShapeError("max_pool_window: window and stride must be positive");
  const std::size_t C = t.dim(0);
  const std::size_t H = t.dim(1);
  const std::size_t W = t.dim(2);
  if (window > H || window > W) {
    throw ShapeError("max_pool_window: window " + std::to_string(window) +
                     " larger than field " + shape_to_string(t.shape()));
  }
  const std::size_t oh = (H - window) / stride + 1;
  const std::size_t ow = (W - window) / stride + 1;
  const auto x = t.data();
  std::vector<Real> out(C * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        Real best = -std::numeric_limits<Real>::infinity();
        std::size_t where = 0;
        bool first = true;
        for (std::size_t u = 0; u < window; ++u) {
          for (std::size_t v = 0; v < window; ++v) {
            const std::size_t i = (c * H + y * stride + u) * W + xo * stride + v;
            if (first || x[i] > best) {
              best = x[i];
              where = i;
              first = false;
            }
          }
        }
        const std::size_t o = (c * oh + y) * ow + xo;
        out[o] = best;
        (*argmax)[o] = where;
      }
    }
  }
  return autograd::make_result(
      "max_pool_window", Shape{C, oh, ow}, std::move(out), {t},
      [argmax](std::span<const Real>, std::span<const Real> g, const autograd::GradSink& sink) {
        Real* gx = sink(0);
        for (std::size_t o = 0; o < g.size(); ++o) gx[(*argmax)[o]] += g[o];
      });
}

}  // namespace capsgram
