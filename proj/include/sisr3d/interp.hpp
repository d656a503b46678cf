#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace sisr3d {

// Two-tap linear interpolation weights for resampling one axis of length
// `in` onto `out` samples. Pixel centres sit at (i + 0.5) / N (align-corners
// false); source coordinates below zero clamp to the first sample and the
// upper neighbour clamps to the last sample.
struct LinearTap {
  std::int64_t i0;
  std::int64_t i1;
  double w0;
  double w1;
};

inline std::vector<LinearTap> half_pixel_taps(std::int64_t in, std::int64_t out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min<std::int64_t>(i0 + 1, in - 1);
    const double lambda = src - static_cast<double>(i0);
    taps[static_cast<std::size_t>(i)] = {i0, i1, 1.0 - lambda, lambda};
  }
  return taps;
}

// Resample axis `axis` of a row-major block with dims `dims` (outer batch
// dimension folded into dims[0] by the caller). Strides are derived from dims.
// `Src` and `Dst` may differ in precision.
template <typename Src, typename Dst>
void resample_axis(const Src* src, Dst* dst, const std::int64_t dims[3], int axis,
                   std::int64_t out_len) {
  std::int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= dims[a];
  for (int a = axis + 1; a < 3; ++a) inner *= dims[a];
  const std::int64_t in_len = dims[axis];
  const auto taps = half_pixel_taps(in_len, out_len);
  for (std::int64_t o = 0; o < outer; ++o) {
    const Src* s = src + o * in_len * inner;
    Dst* d = dst + o * out_len * inner;
    for (std::int64_t i = 0; i < out_len; ++i) {
      const LinearTap& t = taps[static_cast<std::size_t>(i)];
      const Src* a = s + t.i0 * inner;
      const Src* b = s + t.i1 * inner;
      Dst* r = d + i * inner;
      for (std::int64_t k = 0; k < inner; ++k) {
        // a + w1 (b - a) reproduces constants exactly.
        const double av = static_cast<double>(a[k]);
        r[k] = static_cast<Dst>(av + t.w1 * (static_cast<double>(b[k]) - av));
      }
    }
  }
}

// Transpose of resample_axis: scatters `grad_out` (axis length out_len) back
// onto an accumulator with axis length dims[axis]. `grad_in` must be zeroed.
inline void resample_axis_adjoint(const double* grad_out, double* grad_in,
                                  const std::int64_t dims[3], int axis,
                                  std::int64_t out_len) {
  std::int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= dims[a];
  for (int a = axis + 1; a < 3; ++a) inner *= dims[a];
  const std::int64_t in_len = dims[axis];
  const auto taps = half_pixel_taps(in_len, out_len);
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* g = grad_out + o * out_len * inner;
    double* r = grad_in + o * in_len * inner;
    for (std::int64_t i = 0; i < out_len; ++i) {
      const LinearTap& t = taps[static_cast<std::size_t>(i)];
      const double* gi = g + i * inner;
      double* a = r + t.i0 * inner;
      double* b = r + t.i1 * inner;
      for (std::int64_t k = 0; k < inner; ++k) {
        a[k] += t.w0 * gi[k];
        b[k] += t.w1 * gi[k];
      }
    }
  }
}

}  // namespace sisr3d
