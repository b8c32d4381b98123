#pragma once

/// @file conv.hpp
/// 3D convolution and max pooling for the autograd graph. Convolutions run
/// as im2col plus GEMM, chunked along the output z axis so the scratch
/// buffer stays small even for the wide pyramid kernels. The backward pass
/// rebuilds the column buffer instead of keeping it alive.

#include <array>
#include <cstring>

#include "edgeseg/autograd.hpp"
#include "edgeseg/blas.hpp"

namespace edgeseg::ad {

using blas::gemm;

namespace detail {

// Upper bound on scratch elements for one im2col chunk.
inline constexpr std::int64_t kColBudget = 1 << 23;

struct ConvGeometry {
  TensorShape in, out;
  std::array<std::int64_t, 3> kernel, stride, dilation, pad;
  std::int64_t k_rows() const { return in.c * kernel[0] * kernel[1] * kernel[2]; }
};

inline ConvGeometry conv_geometry(const TensorShape& xs, const TensorShape& ws,
                                  const std::array<std::int64_t, 3>& stride,
                                  const std::array<std::int64_t, 3>& dilation) {
  if (ws.c != xs.c)
    throw ShapeError("conv3d: weight expects " + std::to_string(ws.c) + " input channels, got " +
                     std::to_string(xs.c));
  ConvGeometry g;
  g.in = xs;
  g.kernel = {ws.x, ws.y, ws.z};
  g.stride = stride;
  g.dilation = dilation;
  const std::array<std::int64_t, 3> in_sz{xs.x, xs.y, xs.z};
  std::array<std::int64_t, 3> out_sz;
  for (int a = 0; a < 3; ++a) {
    if (g.kernel[a] % 2 == 0) throw ContractViolation("conv3d: kernels must be odd");
    if (g.stride[a] < 1 || g.dilation[a] < 1) throw ContractViolation("conv3d: stride and dilation must be >= 1");
    g.pad[a] = g.dilation[a] * (g.kernel[a] - 1) / 2;
    out_sz[a] = (in_sz[a] + 2 * g.pad[a] - g.dilation[a] * (g.kernel[a] - 1) - 1) / g.stride[a] + 1;
    if (out_sz[a] < 1) throw ShapeError("conv3d: input too small along axis " + std::to_string(a));
  }
  g.out = TensorShape{xs.n, ws.n, out_sz[0], out_sz[1], out_sz[2]};
  return g;
}

// Fills col (k_rows x m_cols, row-major) for output slices [z0, z1) of one
// sample. Row order matches the weight memory layout: ci, kz, ky, kx.
template <typename T>
void im2col_chunk(const Tensor<T>& x, std::int64_t n, const ConvGeometry& g, std::int64_t z0, std::int64_t z1,
                  T* col) {
  const std::int64_t m_cols = g.out.x * g.out.y * (z1 - z0);
  std::int64_t row = 0;
  for (std::int64_t ci = 0; ci < g.in.c; ++ci) {
    const T* src = x.channel(n, ci);
    for (std::int64_t kz = 0; kz < g.kernel[2]; ++kz)
      for (std::int64_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::int64_t kx = 0; kx < g.kernel[0]; ++kx, ++row) {
          T* dst = col + row * m_cols;
          std::int64_t m = 0;
          for (std::int64_t oz = z0; oz < z1; ++oz) {
            const std::int64_t iz = oz * g.stride[2] - g.pad[2] + kz * g.dilation[2];
            const bool z_ok = iz >= 0 && iz < g.in.z;
            for (std::int64_t oy = 0; oy < g.out.y; ++oy) {
              const std::int64_t iy = oy * g.stride[1] - g.pad[1] + ky * g.dilation[1];
              const bool y_ok = iy >= 0 && iy < g.in.y;
              if (!z_ok || !y_ok) {
                std::fill_n(dst + m, g.out.x, T{0});
                m += g.out.x;
                continue;
              }
              const T* plane = src + (iz * g.in.y + iy) * g.in.x;
              const std::int64_t ix0 = -g.pad[0] + kx * g.dilation[0];
              if (g.stride[0] == 1) {
                for (std::int64_t ox = 0; ox < g.out.x; ++ox, ++m) {
                  const std::int64_t ix = ix0 + ox;
                  dst[m] = (ix >= 0 && ix < g.in.x) ? plane[ix] : T{0};
                }
              } else {
                for (std::int64_t ox = 0; ox < g.out.x; ++ox, ++m) {
                  const std::int64_t ix = ix0 + ox * g.stride[0];
                  dst[m] = (ix >= 0 && ix < g.in.x) ? plane[ix] : T{0};
                }
              }
            }
          }
        }
  }
}

// Scatter-adds a column-gradient chunk back onto the input gradient.
template <typename T>
void col2im_chunk(const T* col, std::int64_t n, const ConvGeometry& g, std::int64_t z0, std::int64_t z1,
                  Tensor<T>& gx) {
  const std::int64_t m_cols = g.out.x * g.out.y * (z1 - z0);
  std::int64_t row = 0;
  for (std::int64_t ci = 0; ci < g.in.c; ++ci) {
    T* dst_ch = gx.channel(n, ci);
    for (std::int64_t kz = 0; kz < g.kernel[2]; ++kz)
      for (std::int64_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::int64_t kx = 0; kx < g.kernel[0]; ++kx, ++row) {
          const T* src = col + row * m_cols;
          std::int64_t m = 0;
          for (std::int64_t oz = z0; oz < z1; ++oz) {
            const std::int64_t iz = oz * g.stride[2] - g.pad[2] + kz * g.dilation[2];
            const bool z_ok = iz >= 0 && iz < g.in.z;
            for (std::int64_t oy = 0; oy < g.out.y; ++oy) {
              const std::int64_t iy = oy * g.stride[1] - g.pad[1] + ky * g.dilation[1];
              if (!z_ok || iy < 0 || iy >= g.in.y) {
                m += g.out.x;
                continue;
              }
              T* plane = dst_ch + (iz * g.in.y + iy) * g.in.x;
              const std::int64_t ix0 = -g.pad[0] + kx * g.dilation[0];
              for (std::int64_t ox = 0; ox < g.out.x; ++ox, ++m) {
                const std::int64_t ix = ix0 + ox * g.stride[0];
                if (ix >= 0 && ix < g.in.x) plane[ix] += src[m];
              }
            }
          }
        }
  }
}

inline std::int64_t chunk_slices(const ConvGeometry& g) {
  const std::int64_t per_slice = g.k_rows() * g.out.x * g.out.y;
  return std::max<std::int64_t>(1, kColBudget / std::max<std::int64_t>(per_slice, 1));
}

inline bool pointwise(const ConvGeometry& g) {
  return g.kernel == std::array<std::int64_t, 3>{1, 1, 1} && g.stride == std::array<std::int64_t, 3>{1, 1, 1};
}

}  // namespace detail

/// conv3d(x, w, b): w has shape (C_out, C_in, kx, ky, kz) with odd kernels;
/// padding is chosen per axis so that stride-1 axes keep their extent
/// ("same" padding, p = dilation * (kernel - 1) / 2). Pass b = nullptr for
/// a bias-free convolution; otherwise b has shape (1, C_out, 1, 1, 1).
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::array<std::int64_t, 3> stride = {1, 1, 1},
              std::array<std::int64_t, 3> dilation = {1, 1, 1}) {
  using namespace detail;
  const ConvGeometry g = conv_geometry(x->value.shape(), w->value.shape(), stride, dilation);
  if (b && b->value.shape() != TensorShape{1, g.out.c, 1, 1, 1})
    throw ShapeError("conv3d: bias shape " + b->value.shape().str() + " does not match " +
                     std::to_string(g.out.c) + " output channels");

  const std::int64_t K = g.k_rows();
  const std::int64_t Cout = g.out.c;
  Tensor<T> out(g.out);

  if (pointwise(g)) {
    // 1x1x1 stride 1: the input channel matrix is already the column matrix.
    const std::int64_t M = g.out.voxels();
    for (std::int64_t n = 0; n < g.in.n; ++n)
      gemm(false, false, Cout, M, K, T{1}, w->value.data(), K, x->value.channel(n, 0), M, T{0}, out.channel(n, 0),
           M);
  } else {
    const std::int64_t zs = chunk_slices(g);
    std::vector<T> col(static_cast<std::size_t>(K * g.out.x * g.out.y * std::min(zs, g.out.z)));
    for (std::int64_t n = 0; n < g.in.n; ++n)
      for (std::int64_t z0 = 0; z0 < g.out.z; z0 += zs) {
        const std::int64_t z1 = std::min(g.out.z, z0 + zs);
        const std::int64_t M = g.out.x * g.out.y * (z1 - z0);
        im2col_chunk(x->value, n, g, z0, z1, col.data());
        gemm(false, false, Cout, M, K, T{1}, w->value.data(), K, col.data(), M, T{0},
             out.channel(n, 0) + z0 * g.out.x * g.out.y, g.out.voxels() /*row stride*/);
      }
  }
  if (b) {
    const std::int64_t v = g.out.voxels();
    for (std::int64_t n = 0; n < g.out.n; ++n)
      for (std::int64_t c = 0; c < Cout; ++c) {
        T* p = out.channel(n, c);
        const T bias = b->value[c];
        for (std::int64_t i = 0; i < v; ++i) p[i] += bias;
      }
  }

  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(b);
  return make_op<T>(std::move(out), std::move(parents), [x, w, b, g](Node<T>& self) {
    using namespace detail;
    const std::int64_t K = g.k_rows();
    const std::int64_t Cout = g.out.c;
    const std::int64_t v = g.out.voxels();

    if (b && b->requires_grad) {
      Tensor<T>& gb = b->ensure_grad();
      for (std::int64_t n = 0; n < g.out.n; ++n)
        for (std::int64_t c = 0; c < Cout; ++c) {
          const T* gy = self.grad.channel(n, c);
          T acc{0};
          for (std::int64_t i = 0; i < v; ++i) acc += gy[i];
          gb[c] += acc;
        }
    }

    if (pointwise(g)) {
      for (std::int64_t n = 0; n < g.in.n; ++n) {
        if (w->requires_grad)
          gemm(false, true, Cout, K, v, T{1}, self.grad.channel(n, 0), v, x->value.channel(n, 0), v, T{1},
               w->ensure_grad().data(), K);
        if (x->requires_grad)
          gemm(true, false, K, v, Cout, T{1}, w->value.data(), K, self.grad.channel(n, 0), v, T{1},
               x->ensure_grad().channel(n, 0), v);
      }
      return;
    }

    const std::int64_t zs = chunk_slices(g);
    const std::size_t chunk_elems = static_cast<std::size_t>(K * g.out.x * g.out.y * std::min(zs, g.out.z));
    std::vector<T> col(chunk_elems);
    std::vector<T> gcol(x->requires_grad ? chunk_elems : 0);
    for (std::int64_t n = 0; n < g.in.n; ++n)
      for (std::int64_t z0 = 0; z0 < g.out.z; z0 += zs) {
        const std::int64_t z1 = std::min(g.out.z, z0 + zs);
        const std::int64_t M = g.out.x * g.out.y * (z1 - z0);
        const T* gy = self.grad.channel(n, 0) + z0 * g.out.x * g.out.y;
        if (w->requires_grad) {
          im2col_chunk(x->value, n, g, z0, z1, col.data());
          gemm(false, true, Cout, K, M, T{1}, gy, v, col.data(), M, T{1}, w->ensure_grad().data(), K);
        }
        if (x->requires_grad) {
          gemm(true, false, K, M, Cout, T{1}, w->value.data(), K, gy, v, T{0}, gcol.data(), M);
          col2im_chunk(gcol.data(), n, g, z0, z1, x->ensure_grad());
        }
      }
  });
}

/// Max pooling with one kernel size, per-axis strides, and symmetric
/// padding treated as minus infinity. The argmax is captured in the forward
/// pass; ties resolve to the first voxel in (z, y, x) scan order.
template <typename T>
Var<T> maxpool3d(const Var<T>& x, std::int64_t kernel, const std::array<std::int64_t, 3>& stride,
                 std::int64_t pad) {
  const TensorShape s = x->value.shape();
  if (kernel < 1 || pad < 0) throw ContractViolation("maxpool3d: bad kernel or padding");
  TensorShape os = s;
  const std::array<std::int64_t, 3> in_sz{s.x, s.y, s.z};
  std::array<std::int64_t, 3> out_sz;
  for (int a = 0; a < 3; ++a) {
    out_sz[a] = (in_sz[a] + 2 * pad - kernel) / stride[a] + 1;
    if (out_sz[a] < 1) throw ShapeError("maxpool3d: input too small along axis " + std::to_string(a));
  }
  os.x = out_sz[0];
  os.y = out_sz[1];
  os.z = out_sz[2];

  Tensor<T> out(os);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(os.numel()));
  std::int64_t oi = 0;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* in = x->value.channel(n, c);
      for (std::int64_t oz = 0; oz < os.z; ++oz)
        for (std::int64_t oy = 0; oy < os.y; ++oy)
          for (std::int64_t ox = 0; ox < os.x; ++ox, ++oi) {
            T best{};
            std::int64_t best_idx = -1;
            for (std::int64_t kz = 0; kz < kernel; ++kz) {
              const std::int64_t iz = oz * stride[2] - pad + kz;
              if (iz < 0 || iz >= s.z) continue;
              for (std::int64_t ky = 0; ky < kernel; ++ky) {
                const std::int64_t iy = oy * stride[1] - pad + ky;
                if (iy < 0 || iy >= s.y) continue;
                for (std::int64_t kx = 0; kx < kernel; ++kx) {
                  const std::int64_t ix = ox * stride[0] - pad + kx;
                  if (ix < 0 || ix >= s.x) continue;
                  const std::int64_t idx = (iz * s.y + iy) * s.x + ix;
                  if (best_idx < 0 || in[idx] > best) {
                    best = in[idx];
                    best_idx = idx;
                  }
                }
              }
            }
            if (best_idx < 0) throw ShapeError("maxpool3d: empty pooling window");
            out[oi] = best;
            (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
          }
    }

  return make_op<T>(std::move(out), {x}, [x, s, os, argmax](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& gx = x->ensure_grad();
    const std::int64_t ov = os.voxels();
    std::int64_t oi = 0;
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c) {
        T* gp = gx.channel(n, c);
        const T* gy = self.grad.channel(n, c);
        const std::int64_t base = oi;
        for (std::int64_t i = 0; i < ov; ++i) gp[(*argmax)[static_cast<std::size_t>(base + i)]] += gy[i];
        oi += ov;
      }
  });
}

}  // namespace edgeseg::ad
