#pragma once

// Independent loop implementations used as test oracles. They deliberately
// share nothing with the library kernels beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "capsgram/tensor/random.hpp"
#include "capsgram/tensor/tensor.hpp"

namespace capsgram::oracle {

// out[o,y,x] = sum_{c,u,v} in[c, y*s+u-p, x*s+v-p] * k[o,c,u,v], zero outside.
inline std::vector<double> correlate(const std::vector<double>& in, std::size_t C, std::size_t H,
                                     std::size_t W, const std::vector<double>& k, std::size_t O,
                                     std::size_t kh, std::size_t kw, std::size_t stride,
                                     std::size_t pad) {
  const std::size_t oh = (H + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(O * oh * ow, 0.0);
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v) {
              const long iy = static_cast<long>(y * stride + u) - static_cast<long>(pad);
              const long ix = static_cast<long>(x * stride + v) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
              acc += in[(c * H + iy) * W + ix] * k[((o * C + c) * kh + u) * kw + v];
            }
          }
        }
        out[(o * oh + y) * ow + x] = acc;
      }
    }
  }
  return out;
}

inline std::vector<double> max_pool(const std::vector<double>& in, std::size_t C, std::size_t H,
                                    std::size_t W, std::size_t window, std::size_t stride) {
  const std::size_t oh = (H - window) / stride + 1;
  const std::size_t ow = (W - window) / stride + 1;
  std::vector<double> out;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double best = in[(c * H + y * stride) * W + x * stride];
        for (std::size_t u = 0; u < window; ++u)
          for (std::size_t v = 0; v < window; ++v)
            best = std::max(best, in[(c * H + y * stride + u) * W + x * stride + v]);
        out.push_back(best);
      }
  return out;
}

inline double norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = scale * rng.normal();
  return Tensor(std::move(shape), std::move(values));
}

inline std::vector<double> values_of(const Tensor& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

}  // namespace capsgram::oracle
