#pragma once

// LR/HR pair generation by axial slice removal followed by re-upsampling.

#include <numeric>
#include <string>
#include <utility>

#include "sisr3d/voxio.hpp"

namespace sisr3d {

enum class UpsampleMode { trilinear, same_insertion };

inline std::string to_string(UpsampleMode m) {
  return m == UpsampleMode::trilinear ? "trilinear" : "insert";
}

struct DegradeSpec {
  int scale = 2;
  UpsampleMode upsample_mode = UpsampleMode::same_insertion;
  std::int64_t patch_multiple = 1;

  void validate() const {
    detail::require(scale == 2 || scale == 4 || scale == 8, "scale must be one of 2, 4, 8");
    detail::require(patch_multiple > 0, "patch_multiple must be positive");
  }
};

inline Volume axial_decimate(const Volume& v, std::int64_t scale) {
  detail::require(scale > 0, "axial_decimate: scale must be positive");
  detail::require(v.dims().d % scale == 0, "axial_decimate: depth " + std::to_string(v.dims().d) +
                                               " not divisible by scale " + std::to_string(scale));
  const std::int64_t out_d = v.dims().d / scale;
  const auto plane = static_cast<std::ptrdiff_t>(v.slice_size());
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(out_d * plane));
  for (std::int64_t i = 0; i < out_d; ++i) {
    const auto src = v.voxels().begin() + i * scale * plane;
    out.insert(out.end(), src, src + plane);
  }
  Spacing3 s = v.spacing();
  s.z *= static_cast<double>(scale);
  return Volume({out_d, v.dims().h, v.dims().w}, s, v.domain(), std::move(out));
}

// Output slice i is input slice floor(i / scale).
inline Volume upsample_same_insertion(const Volume& v, std::int64_t scale) {
  detail::require(scale > 0, "upsample_same_insertion: scale must be positive");
  const std::int64_t out_d = v.dims().d * scale;
  const auto plane = static_cast<std::ptrdiff_t>(v.slice_size());
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(out_d * plane));
  for (std::int64_t i = 0; i < out_d; ++i) {
    const auto src = v.voxels().begin() + (i / scale) * plane;
    out.insert(out.end(), src, src + plane);
  }
  Spacing3 s = v.spacing();
  s.z /= static_cast<double>(scale);
  return Volume({out_d, v.dims().h, v.dims().w}, s, v.domain(), std::move(out));
}

// Linear interpolation along depth only; in-plane axes are already at target
// resolution so trilinear reduces to this.
inline Volume upsample_trilinear_axial(const Volume& v, std::int64_t scale) {
  detail::require(scale > 0, "upsample_trilinear_axial: scale must be positive");
  detail::require(v.dims().d >= 2, "upsample_trilinear_axial: need at least two slices");
  const std::int64_t dims[3] = {v.dims().d, v.dims().h, v.dims().w};
  const std::int64_t out_d = v.dims().d * scale;
  std::vector<float> out(static_cast<std::size_t>(out_d * v.slice_size()));
  resample_axis(v.voxels().data(), out.data(), dims, 0, out_d);
  Spacing3 s = v.spacing();
  s.z /= static_cast<double>(scale);
  return Volume({out_d, v.dims().h, v.dims().w}, s, v.domain(), std::move(out));
}

struct LrHrPair {
  Volume lr;
  Volume hr;
};

// truncate -> decimate -> clip/normalize (both branches) -> upsample.
inline LrHrPair make_lr_hr_pair(const Volume& hr, const DegradeSpec& spec) {
  spec.validate();
  if (hr.domain() != IntensityDomain::HU) throw StateError("make_lr_hr_pair: input must be in HU");
  const std::int64_t multiple = std::lcm<std::int64_t>(spec.scale, spec.patch_multiple);
  const Volume truncated = truncate_slices(hr, multiple);
  const Volume decimated = axial_decimate(truncated, spec.scale);
  const Volume lr_norm = clip_normalize(decimated);
  Volume hr_out = clip_normalize(truncated);
  Volume lr = spec.upsample_mode == UpsampleMode::same_insertion
                  ? upsample_same_insertion(lr_norm, spec.scale)
                  : upsample_trilinear_axial(lr_norm, spec.scale);
  return {std::move(lr), std::move(hr_out)};
}

}  // namespace sisr3d
