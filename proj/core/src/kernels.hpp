#pragma once

// Raw compute kernels over contiguous row-major buffers. Shared by the differentiable ops and
// the structural (skipping) executor.

#include <cstdint>
#include <span>
#include <vector>

namespace lcnet::kernels {

struct ConvGeometry {
  std::int64_t in_channels = 0;
  std::int64_t in_h = 0;
  std::int64_t in_w = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 0;
  std::int64_t kernel_w = 0;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t out_h = 0;
  std::int64_t out_w = 0;

  std::int64_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::int64_t out_pixels() const { return out_h * out_w; }
  bool is_pointwise() const {
    return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0;
  }
};

// C(m x n) = op(A) * op(B), or C += ... when accumulate. op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
          const T* b, T* c, bool accumulate);

// cols has patch() rows and out_pixels() columns.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols);

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx);

// Single instance: x is (in_channels, in_h, in_w), w is (out_channels, patch()), y is
// (out_channels, out_pixels()). bias may be null.
template <typename T>
void conv2d_instance(const T* x, const T* w, const T* bias, const ConvGeometry& g, T* y,
                     std::vector<T>& scratch);

}  // namespace lcnet::kernels
