#include "kernels.hpp"

#include <Eigen/Core>
#include <algorithm>

namespace lcnet::kernels {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  using ConstMap = Eigen::Map<const RowMatrix<T>>;
  Eigen::Map<RowMatrix<T>> out(c, m, n);
  if (k == 0) {
    if (!accumulate) out.setZero();
    return;
  }
  const auto apply = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      out.noalias() += lhs * rhs;
    } else {
      out.noalias() = lhs * rhs;
    }
  };
  if (!trans_a && !trans_b) {
    apply(ConstMap(a, m, k), ConstMap(b, k, n));
  } else if (!trans_a && trans_b) {
    apply(ConstMap(a, m, k), ConstMap(b, n, k).transpose());
  } else if (trans_a && !trans_b) {
    apply(ConstMap(a, k, m).transpose(), ConstMap(b, k, n));
  } else {
    apply(ConstMap(a, k, m).transpose(), ConstMap(b, n, k).transpose());
  }
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::int64_t pixels = g.out_pixels();
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    const T* plane = x + c * g.in_h * g.in_w;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        T* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * pixels;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * g.in_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::int64_t pixels = g.out_pixels();
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    T* plane = dx + c * g.in_h * g.in_w;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * pixels;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = row + oy * g.out_w;
          T* dst = plane + iy * g.in_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_instance(const T* x, const T* w, const T* bias, const ConvGeometry& g, T* y,
                     std::vector<T>& scratch) {
  const T* cols = x;
  if (!g.is_pointwise()) {
    scratch.resize(static_cast<std::size_t>(g.patch() * g.out_pixels()));
    im2col(x, g, scratch.data());
    cols = scratch.data();
  }
  gemm<T>(false, false, g.out_channels, g.out_pixels(), g.patch(), w, cols, y, false);
  if (bias) {
    const std::int64_t pixels = g.out_pixels();
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
      T* row = y + o * pixels;
      for (std::int64_t p = 0; p < pixels; ++p) row[p] += bias[o];
    }
  }
}

#define LCNET_INSTANTIATE_KERNELS(T)                                                         \
  template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const T*,      \
                        const T*, T*, bool);                                                 \
  template void im2col<T>(const T*, const ConvGeometry&, T*);                                \
  template void col2im_add<T>(const T*, const ConvGeometry&, T*);                            \
  template void conv2d_instance<T>(const T*, const T*, const T*, const ConvGeometry&, T*,    \
                                   std::vector<T>&);

LCNET_INSTANTIATE_KERNELS(float)
LCNET_INSTANTIATE_KERNELS(double)

}  // namespace lcnet::kernels
