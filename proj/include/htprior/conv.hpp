#pragma once

#include <string>
#include <type_traits>
#include <vector>

#include "htprior/common.hpp"
#include "htprior/tensor.hpp"

namespace htprior {

enum class Conv1dMode { kDense, kChannelwise };

namespace kernels {

struct Conv2dDims {
  std::size_t h, w, cin, kh, kw, cout;
};

inline Conv2dDims conv2d_dims(const Shape& in, const Shape& k) {
  if (in.rank() != 3) throw ConfigError("conv2d: input must be [H,W,C], got " + in.str());
  if (k.rank() != 4) throw ConfigError("conv2d: kernel must be [kh,kw,Cin,Cout], got " + k.str());
  if (k[0] % 2 == 0 || k[1] % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd, got " + k.str());
  if (k[2] != in[2]) {
    throw ConfigError("conv2d: kernel expects " + std::to_string(k[2]) + " input channels, input has " +
                      std::to_string(in[2]));
  }
  return {in[0], in[1], in[2], k[0], k[1], k[3]};
}

// Zero-padded "same" cross-correlation. Each output is accumulated in double
// and rounded once.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& in, const BasicTensor<T>& k,
                              const std::type_identity_t<BasicTensor<T>>* bias = nullptr) {
  const auto d = conv2d_dims(in.shape(), k.shape());
  if (bias && bias->size() != d.cout) throw ConfigError("conv2d: bias length must equal output channels");
  BasicTensor<T> out(Shape{d.h, d.w, d.cout});
  const long ph = static_cast<long>(d.kh / 2), pw = static_cast<long>(d.kw / 2);
  const std::vector<double> kd(k.data().begin(), k.data().end());
  parallel_for(d.h, 8, [&](std::size_t y0, std::size_t y1) {
    std::vector<double> acc(d.cout);
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        for (std::size_t co = 0; co < d.cout; ++co) acc[co] = bias ? static_cast<double>((*bias)[co]) : 0.0;
        for (std::size_t i = 0; i < d.kh; ++i) {
          const long yy = static_cast<long>(y) + static_cast<long>(i) - ph;
          if (yy < 0 || yy >= static_cast<long>(d.h)) continue;
          for (std::size_t j = 0; j < d.kw; ++j) {
            const long xx = static_cast<long>(x) + static_cast<long>(j) - pw;
            if (xx < 0 || xx >= static_cast<long>(d.w)) continue;
            const T* src = &in.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), 0);
            const double* kk = &kd[((i * d.kw + j) * d.cin) * d.cout];
            for (std::size_t co = 0; co < d.cout; ++co) {
              double s = 0.0;
              for (std::size_t ci = 0; ci < d.cin; ++ci) s += static_cast<double>(src[ci]) * kk[ci * d.cout + co];
              acc[co] += s;
            }
          }
        }
        T* o = &out.at(y, x, 0);
        for (std::size_t co = 0; co < d.cout; ++co) o[co] = static_cast<T>(acc[co]);
      }
  });
  return out;
}

template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& k, const Shape& in_shape) {
  const auto d = conv2d_dims(in_shape, k.shape());
  BasicTensor<T> gin(in_shape);
  const long ph = static_cast<long>(d.kh / 2), pw = static_cast<long>(d.kw / 2);
  // gin(y', x', ci) = sum over taps of g(y'-i+ph, x'-j+pw, co) * k(i, j, ci, co)
  parallel_for(d.h, 8, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        T* gi = &gin.at(y, x, 0);
        for (std::size_t i = 0; i < d.kh; ++i) {
          const long yy = static_cast<long>(y) - static_cast<long>(i) + ph;
          if (yy < 0 || yy >= static_cast<long>(d.h)) continue;
          for (std::size_t j = 0; j < d.kw; ++j) {
            const long xx = static_cast<long>(x) - static_cast<long>(j) + pw;
            if (xx < 0 || xx >= static_cast<long>(d.w)) continue;
            const T* g = &grad_out.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), 0);
            const T* kk = &k[((i * d.kw + j) * d.cin) * d.cout];
            for (std::size_t ci = 0; ci < d.cin; ++ci) {
              T s{0};
              for (std::size_t co = 0; co < d.cout; ++co) s += g[co] * kk[ci * d.cout + co];
              gi[ci] += s;
            }
          }
        }
      }
  });
  return gin;
}

template <typename T>
BasicTensor<T> conv2d_backward_kernel(const BasicTensor<T>& grad_out, const BasicTensor<T>& in, const Shape& k_shape) {
  const auto d = conv2d_dims(in.shape(), k_shape);
  BasicTensor<T> gk(k_shape);
  const long ph = static_cast<long>(d.kh / 2), pw = static_cast<long>(d.kw / 2);
  // one task per tap keeps the reduction order fixed; each weight is one
  // register sum over all pixels
  parallel_for(d.kh * d.kw, 1, [&](std::size_t t0, std::size_t t1) {
    for (std::size_t tap = t0; tap < t1; ++tap) {
      const std::size_t i = tap / d.kw, j = tap % d.kw;
      const std::size_t y_lo = i < static_cast<std::size_t>(ph) ? static_cast<std::size_t>(ph) - i : 0;
      const std::size_t y_hi = std::min(d.h, d.h + static_cast<std::size_t>(ph) - i);
      const std::size_t x_lo = j < static_cast<std::size_t>(pw) ? static_cast<std::size_t>(pw) - j : 0;
      const std::size_t x_hi = std::min(d.w, d.w + static_cast<std::size_t>(pw) - j);
      for (std::size_t ci = 0; ci < d.cin; ++ci)
        for (std::size_t co = 0; co < d.cout; ++co) {
          double s = 0.0;
          for (std::size_t y = y_lo; y < y_hi; ++y) {
            const T* src = &in.at(y + i - static_cast<std::size_t>(ph), x_lo + j - static_cast<std::size_t>(pw), ci);
            const T* g = &grad_out.at(y, x_lo, co);
            for (std::size_t x = 0; x < x_hi - x_lo; ++x)
              s += static_cast<double>(src[x * d.cin]) * static_cast<double>(g[x * d.cout]);
          }
          gk[(tap * d.cin + ci) * d.cout + co] = static_cast<T>(s);
        }
    }
  });
  return gk;
}

template <typename T>
BasicTensor<T> bias_backward(const BasicTensor<T>& grad_out) {
  const std::size_t c = grad_out.dim(2);
  BasicTensor<T> gb(Shape{c});
  for (std::size_t p = 0; p < grad_out.size() / c; ++p)
    for (std::size_t k = 0; k < c; ++k) gb[k] += grad_out[p * c + k];
  return gb;
}

struct Conv1dDims {
  std::size_t nr, nt, cin, k, cout;
};

// Dense kernels are [k, Cin, Cout]; channelwise kernels are [k, 1, C] with
// one filter per channel.
inline Conv1dDims conv1d_dims(const Shape& in, const Shape& k, Conv1dMode mode) {
  if (in.rank() != 3) throw ConfigError("conv1d_rho: input must be [n_rho,n_theta,C], got " + in.str());
  if (k.rank() != 3) throw ConfigError("conv1d_rho: kernel must be rank 3, got " + k.str());
  if (k[0] % 2 == 0) throw ConfigError("conv1d_rho: filter length must be odd, got " + std::to_string(k[0]));
  if (mode == Conv1dMode::kChannelwise) {
    if (k[1] != 1 || k[2] != in[2]) {
      throw ConfigError("conv1d_rho: channelwise kernel must be [k,1," + std::to_string(in[2]) + "], got " +
                        k.str());
    }
    return {in[0], in[1], in[2], k[0], in[2]};
  }
  if (k[1] != in[2]) {
    throw ConfigError("conv1d_rho: kernel expects " + std::to_string(k[1]) + " input channels, input has " +
                      std::to_string(in[2]));
  }
  return {in[0], in[1], in[2], k[0], k[2]};
}

// Zero-padded convolution along rho, independently for every theta column.
// Double accumulation as in conv2d_forward.
template <typename T>
BasicTensor<T> conv1d_rho_forward(const BasicTensor<T>& in, const BasicTensor<T>& k, Conv1dMode mode) {
  const auto d = conv1d_dims(in.shape(), k.shape(), mode);
  BasicTensor<T> out(Shape{d.nr, d.nt, d.cout});
  const long half = static_cast<long>(d.k / 2);
  const std::vector<double> kd(k.data().begin(), k.data().end());
  parallel_for(d.nr, 16, [&](std::size_t r0, std::size_t r1) {
    std::vector<double> acc(d.cout);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t t = 0; t < d.nt; ++t) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t tap = 0; tap < d.k; ++tap) {
          const long rr = static_cast<long>(r) + static_cast<long>(tap) - half;
          if (rr < 0 || rr >= static_cast<long>(d.nr)) continue;
          const T* src = &in.at(static_cast<std::size_t>(rr), t, 0);
          if (mode == Conv1dMode::kChannelwise) {
            const double* kk = &kd[tap * d.cout];
            for (std::size_t c = 0; c < d.cout; ++c) acc[c] += static_cast<double>(src[c]) * kk[c];
          } else {
            const double* kk = &kd[tap * d.cin * d.cout];
            for (std::size_t co = 0; co < d.cout; ++co) {
              double s = 0.0;
              for (std::size_t ci = 0; ci < d.cin; ++ci) s += static_cast<double>(src[ci]) * kk[ci * d.cout + co];
              acc[co] += s;
            }
          }
        }
        T* o = &out.at(r, t, 0);
        for (std::size_t c = 0; c < d.cout; ++c) o[c] = static_cast<T>(acc[c]);
      }
  });
  return out;
}

template <typename T>
BasicTensor<T> conv1d_rho_backward_input(const BasicTensor<T>& g, const BasicTensor<T>& k, const Shape& in_shape,
                                         Conv1dMode mode) {
  const auto d = conv1d_dims(in_shape, k.shape(), mode);
  BasicTensor<T> gin(in_shape);
  const long half = static_cast<long>(d.k / 2);
  parallel_for(d.nr, 16, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t tap = 0; tap < d.k; ++tap) {
        // output row that read input row r through this tap
        const long ro = static_cast<long>(r) - static_cast<long>(tap) + half;
        if (ro < 0 || ro >= static_cast<long>(d.nr)) continue;
        for (std::size_t t = 0; t < d.nt; ++t) {
          const T* go = &g.at(static_cast<std::size_t>(ro), t, 0);
          T* gi = &gin.at(r, t, 0);
          if (mode == Conv1dMode::kChannelwise) {
            const T* kk = &k[tap * d.cout];
            for (std::size_t c = 0; c < d.cout; ++c) gi[c] += go[c] * kk[c];
          } else {
            const T* kk = &k[tap * d.cin * d.cout];
            for (std::size_t ci = 0; ci < d.cin; ++ci) {
              T s{0};
              for (std::size_t co = 0; co < d.cout; ++co) s += go[co] * kk[ci * d.cout + co];
              gi[ci] += s;
            }
          }
        }
      }
  });
  return gin;
}

template <typename T>
BasicTensor<T> conv1d_rho_backward_kernel(const BasicTensor<T>& g, const BasicTensor<T>& in, const Shape& k_shape,
                                          Conv1dMode mode) {
  const auto d = conv1d_dims(in.shape(), k_shape, mode);
  BasicTensor<T> gk(k_shape);
  const long half = static_cast<long>(d.k / 2);
  parallel_for(d.k, 1, [&](std::size_t k0, std::size_t k1) {
    for (std::size_t tap = k0; tap < k1; ++tap) {
      // output rows r whose source row r + tap - half is inside the map
      const std::size_t r_lo = tap < static_cast<std::size_t>(half) ? static_cast<std::size_t>(half) - tap : 0;
      const std::size_t r_hi = std::min(d.nr, d.nr + static_cast<std::size_t>(half) - tap);
      if (r_lo >= r_hi) continue;
      const std::size_t n = (r_hi - r_lo) * d.nt;  // rows are contiguous in memory
      const T* src = &in.at(r_lo + tap - static_cast<std::size_t>(half), 0, 0);
      const T* go = &g.at(r_lo, 0, 0);
      if (mode == Conv1dMode::kChannelwise) {
        for (std::size_t c = 0; c < d.cout; ++c) {
          double s = 0.0;
          for (std::size_t p = 0; p < n; ++p)
            s += static_cast<double>(src[p * d.cin + c]) * static_cast<double>(go[p * d.cout + c]);
          gk[tap * d.cout + c] = static_cast<T>(s);
        }
      } else {
        for (std::size_t ci = 0; ci < d.cin; ++ci)
          for (std::size_t co = 0; co < d.cout; ++co) {
            double s = 0.0;
            for (std::size_t p = 0; p < n; ++p)
              s += static_cast<double>(src[p * d.cin + ci]) * static_cast<double>(go[p * d.cout + co]);
            gk[(tap * d.cin + ci) * d.cout + co] = static_cast<T>(s);
          }
      }
    }
  });
  return gk;
}

}  // namespace kernels
}  // namespace htprior
