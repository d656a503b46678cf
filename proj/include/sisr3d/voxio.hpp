#pragma once

// Volume representation, raw+meta file I/O, synthetic CT phantoms and the
// voxel-level preprocessing used before degradation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sisr3d/error.hpp"
#include "sisr3d/interp.hpp"

namespace sisr3d {

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 1476.0;
inline constexpr double kHuRange = kHuMax - kHuMin;  // 2500

enum class IntensityDomain { HU, Normalized };

struct Dims3 {
  std::int64_t d = 0, h = 0, w = 0;

  std::int64_t count() const { return d * h * w; }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

struct Spacing3 {
  double z = 1.0, y = 1.0, x = 1.0;
  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

inline std::string to_string(const Dims3& d) {
  return std::to_string(d.d) + "," + std::to_string(d.h) + "," + std::to_string(d.w);
}

class Volume {
 public:
  Volume() = default;

  Volume(Dims3 dims, Spacing3 spacing, IntensityDomain domain, std::vector<float> voxels)
      : dims_(dims), spacing_(spacing), domain_(domain), voxels_(std::move(voxels)) {
    detail::require(dims_.d > 0 && dims_.h > 0 && dims_.w > 0, "volume dims must be positive");
    detail::require(spacing_.z > 0 && spacing_.y > 0 && spacing_.x > 0,
                    "volume spacing must be positive");
    detail::require(static_cast<std::int64_t>(voxels_.size()) == dims_.count(),
                    "voxel count does not match dims");
  }

  static Volume filled(Dims3 dims, float value, IntensityDomain domain = IntensityDomain::HU,
                       Spacing3 spacing = {}) {
    return Volume(dims, spacing, domain,
                  std::vector<float>(static_cast<std::size_t>(std::max<std::int64_t>(dims.count(), 0)), value));
  }

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  IntensityDomain domain() const { return domain_; }
  const std::vector<float>& voxels() const { return voxels_; }
  std::vector<float>& voxels() { return voxels_; }

  std::size_t index(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return static_cast<std::size_t>((d * dims_.h + h) * dims_.w + w);
  }
  float at(std::int64_t d, std::int64_t h, std::int64_t w) const { return voxels_[index(d, h, w)]; }
  float& at(std::int64_t d, std::int64_t h, std::int64_t w) { return voxels_[index(d, h, w)]; }

  std::int64_t slice_size() const { return dims_.h * dims_.w; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims3 dims_{};
  Spacing3 spacing_{};
  IntensityDomain domain_ = IntensityDomain::HU;
  std::vector<float> voxels_;
};

// Exact tiling of a volume into equally sized, non-overlapping blocks.
struct PatchGrid {
  Dims3 patch_dims;
  Dims3 grid_dims;
  Dims3 source_dims;

  std::int64_t count() const { return grid_dims.count(); }
};

// ---------------------------------------------------------------------------
// Intensity mapping

inline Volume clip_normalize(const Volume& v) {
  if (v.domain() != IntensityDomain::HU) throw StateError("clip_normalize: volume already normalized");
  std::vector<float> out(v.voxels().size());
  std::transform(v.voxels().begin(), v.voxels().end(), out.begin(), [](float x) {
    const double c = std::clamp(static_cast<double>(x), kHuMin, kHuMax);
    return static_cast<float>((c - kHuMin) / kHuRange);
  });
  return Volume(v.dims(), v.spacing(), IntensityDomain::Normalized, std::move(out));
}

inline Volume denormalize(const Volume& v) {
  if (v.domain() != IntensityDomain::Normalized) throw StateError("denormalize: volume already in HU");
  std::vector<float> out(v.voxels().size());
  std::transform(v.voxels().begin(), v.voxels().end(), out.begin(), [](float x) {
    return static_cast<float>(kHuRange * static_cast<double>(x) + kHuMin);
  });
  return Volume(v.dims(), v.spacing(), IntensityDomain::HU, std::move(out));
}

// ---------------------------------------------------------------------------
// File I/O: <stem>.raw (int16 LE, d/h/w row-major) + <stem>.meta (key=value).

namespace detail {

inline std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  std::filesystem::path p = stem;
  const auto e = p.extension();
  if (e == ".raw" || e == ".meta") p.replace_extension();
  p += ext;
  return p;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::int16_t quantize_hu(float hu) {
  const double r = std::nearbyint(static_cast<double>(hu));
  return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
}

}  // namespace detail

inline std::filesystem::path raw_path(const std::filesystem::path& stem) {
  return detail::with_suffix(stem, ".raw");
}
inline std::filesystem::path meta_path(const std::filesystem::path& stem) {
  return detail::with_suffix(stem, ".meta");
}

// Normalized volumes are mapped back to HU before int16 quantization; the meta
// file records the domain so that loading restores it.
inline void save_volume(const Volume& v, const std::filesystem::path& stem) {
  const Volume hu = v.domain() == IntensityDomain::Normalized ? denormalize(v) : v;
  std::ofstream raw(raw_path(stem), std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot write " + raw_path(stem).string());
  std::vector<char> bytes(hu.voxels().size() * 2);
  for (std::size_t i = 0; i < hu.voxels().size(); ++i) {
    const auto q = static_cast<std::uint16_t>(detail::quantize_hu(hu.voxels()[i]));
    bytes[2 * i] = static_cast<char>(q & 0xFF);
    bytes[2 * i + 1] = static_cast<char>((q >> 8) & 0xFF);
  }
  raw.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!raw) throw IoError("short write to " + raw_path(stem).string());

  std::ofstream meta(meta_path(stem), std::ios::trunc);
  if (!meta) throw IoError("cannot write " + meta_path(stem).string());
  meta.precision(17);
  meta << "dims=" << to_string(v.dims()) << "\n"
       << "spacing=" << v.spacing().z << "," << v.spacing().y << "," << v.spacing().x << "\n"
       << "domain=" << (v.domain() == IntensityDomain::HU ? "HU" : "NORM") << "\n";
  if (!meta) throw IoError("short write to " + meta_path(stem).string());
}

inline Volume load_volume(const std::filesystem::path& stem) {
  std::ifstream meta(meta_path(stem));
  if (!meta) throw IoError("cannot open " + meta_path(stem).string());
  Dims3 dims{};
  Spacing3 spacing{};
  IntensityDomain domain = IntensityDomain::HU;
  bool have_dims = false;
  std::string line;
  while (std::getline(meta, line)) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed meta line: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    try {
      if (key == "dims") {
        const auto p = detail::split(val, ',');
        if (p.size() != 3) throw FormatError("dims needs three values");
        dims = {std::stoll(p[0]), std::stoll(p[1]), std::stoll(p[2])};
        have_dims = true;
      } else if (key == "spacing") {
        const auto p = detail::split(val, ',');
        if (p.size() != 3) throw FormatError("spacing needs three values");
        spacing = {std::stod(p[0]), std::stod(p[1]), std::stod(p[2])};
      } else if (key == "domain") {
        if (val == "HU") domain = IntensityDomain::HU;
        else if (val == "NORM") domain = IntensityDomain::Normalized;
        else throw FormatError("unknown domain " + val);
      }
    } catch (const std::logic_error&) {
      throw FormatError("unparsable meta value: " + line);
    }
  }
  if (!have_dims || dims.d <= 0 || dims.h <= 0 || dims.w <= 0)
    throw FormatError("meta file lacks valid dims: " + meta_path(stem).string());
  if (spacing.z <= 0 || spacing.y <= 0 || spacing.x <= 0)
    throw FormatError("meta file has non-positive spacing");

  std::ifstream raw(raw_path(stem), std::ios::binary | std::ios::ate);
  if (!raw) throw IoError("cannot open " + raw_path(stem).string());
  const auto size = static_cast<std::int64_t>(raw.tellg());
  if (size != dims.count() * 2)
    throw FormatError("raw file holds " + std::to_string(size / 2) + " voxels, meta expects " +
                      std::to_string(dims.count()));
  raw.seekg(0);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  raw.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!raw) throw IoError("short read from " + raw_path(stem).string());
  std::vector<float> voxels(static_cast<std::size_t>(dims.count()));
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    voxels[i] = static_cast<float>(static_cast<std::int16_t>(u));
  }
  Volume hu(dims, spacing, IntensityDomain::HU, std::move(voxels));
  return domain == IntensityDomain::Normalized ? clip_normalize(hu) : hu;
}

// ---------------------------------------------------------------------------
// Synthetic phantoms

enum class PhantomKind { flat, spheres, shepp_like };

namespace detail {

// Soft indicator of an axis-aligned ellipsoid: ~1 inside, ~0 outside, with a
// logistic edge about one voxel wide.
struct Blob {
  double cz, cy, cx;
  double rz, ry, rx;
  double hu;
};

inline void paint(std::vector<double>& field, const Dims3& dims, const Blob& b) {
  constexpr double edge = 0.6;
  const double rmin = std::min({b.rz, b.ry, b.rx});
  const auto lo = [](double c, double r) { return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c - r - 4))); };
  const auto hi = [](double c, double r, std::int64_t n) {
    return std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::ceil(c + r + 4)));
  };
  for (std::int64_t d = lo(b.cz, b.rz); d <= hi(b.cz, b.rz, dims.d); ++d)
    for (std::int64_t h = lo(b.cy, b.ry); h <= hi(b.cy, b.ry, dims.h); ++h)
      for (std::int64_t w = lo(b.cx, b.rx); w <= hi(b.cx, b.rx, dims.w); ++w) {
        const double z = (d + 0.5 - b.cz) / b.rz;
        const double y = (h + 0.5 - b.cy) / b.ry;
        const double x = (w + 0.5 - b.cx) / b.rx;
        // Signed distance approximated in voxels along the smallest radius.
        const double dist = (std::sqrt(z * z + y * y + x * x) - 1.0) * rmin;
        const double s = 1.0 / (1.0 + std::exp(dist / edge));
        auto& v = field[static_cast<std::size_t>((d * dims.h + h) * dims.w + w)];
        v = v * (1.0 - s) + b.hu * s;
      }
}

}  // namespace detail

inline Volume generate_phantom(std::uint64_t seed, Dims3 dims, PhantomKind kind) {
  detail::require(dims.d >= 8 && dims.h >= 8 && dims.w >= 8, "phantom dims must be at least 8 per axis");
  std::vector<double> field(static_cast<std::size_t>(dims.count()), kHuMin);
  if (kind != PhantomKind::flat) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double D = static_cast<double>(dims.d), H = static_cast<double>(dims.h),
                 W = static_cast<double>(dims.w);
    const double m = std::min({D, H, W});
    // Body envelope of soft tissue filling most of the field of view.
    detail::paint(field, dims, {D / 2, H / 2, W / 2, 0.62 * D, 0.42 * H, 0.46 * W, 40.0});

    const auto random_inside = [&](double scale) {
      return std::array<double, 3>{D / 2 + (unit(rng) - 0.5) * D * scale,
                                   H / 2 + (unit(rng) - 0.5) * H * 0.7 * scale,
                                   W / 2 + (unit(rng) - 0.5) * W * 0.75 * scale};
    };

    if (kind == PhantomKind::shepp_like) {
      // Lungs, spine and heart, then nodules and vessels.
      detail::paint(field, dims, {D / 2, H * 0.45, W * 0.32, 0.55 * D, 0.26 * H, 0.12 * W, -820.0});
      detail::paint(field, dims, {D / 2, H * 0.45, W * 0.68, 0.55 * D, 0.26 * H, 0.12 * W, -820.0});
      detail::paint(field, dims, {D / 2, H * 0.78, W * 0.5, 0.6 * D, 0.06 * H, 0.06 * W, 700.0});
      detail::paint(field, dims, {D * 0.55, H * 0.45, W * 0.5, 0.2 * D, 0.12 * H, 0.08 * W, 60.0});
      const int vessels = 6 + static_cast<int>(unit(rng) * 6);
      for (int i = 0; i < vessels; ++i) {
        const auto c = random_inside(0.8);
        const double r = 0.6 + unit(rng) * 0.8;
        detail::paint(field, dims, {c[0], c[1], c[2], 0.3 * D, r, r, 40.0 + 260.0 * unit(rng)});
      }
    }

    static constexpr std::array<double, 6> palette{-800.0, -100.0, 60.0, 250.0, 600.0, 1100.0};
    const int count = 8 + static_cast<int>(m / 4) + static_cast<int>(unit(rng) * 6);
    for (int i = 0; i < count; ++i) {
      const auto c = random_inside(0.85);
      const double r = 1.2 + unit(rng) * (m / 7.0);
      const double hu = palette[static_cast<std::size_t>(unit(rng) * palette.size()) % palette.size()];
      detail::paint(field, dims, {c[0], c[1], c[2], r * (0.8 + 0.4 * unit(rng)),
                                  r * (0.8 + 0.4 * unit(rng)), r * (0.8 + 0.4 * unit(rng)), hu});
    }
  }
  std::vector<float> voxels(field.size());
  std::transform(field.begin(), field.end(), voxels.begin(), [](double v) {
    return static_cast<float>(std::clamp(v, kHuMin, kHuMax));
  });
  return Volume(dims, {1.5, 1.0, 1.0}, IntensityDomain::HU, std::move(voxels));
}

// ---------------------------------------------------------------------------
// Geometry

// Bilinear halving of every axial plane; with half-pixel centres each output
// sample is the mean of a 2x2 block.
inline Volume pre_downsample_inplane(const Volume& v) {
  const Dims3 in = v.dims();
  detail::require(in.h % 2 == 0 && in.w % 2 == 0, "pre_downsample_inplane: H and W must be even");
  const std::int64_t d1[3] = {in.d, in.h, in.w};
  std::vector<double> tmp(static_cast<std::size_t>(in.d * (in.h / 2) * in.w));
  resample_axis(v.voxels().data(), tmp.data(), d1, 1, in.h / 2);
  const std::int64_t d2[3] = {in.d, in.h / 2, in.w};
  std::vector<float> out(static_cast<std::size_t>(in.d * (in.h / 2) * (in.w / 2)));
  resample_axis(tmp.data(), out.data(), d2, 2, in.w / 2);
  const Spacing3 s{v.spacing().z, v.spacing().y * 2, v.spacing().x * 2};
  return Volume({in.d, in.h / 2, in.w / 2}, s, v.domain(), std::move(out));
}

// Keeps depth multiple * floor(D / multiple); the odd leftover slice is taken
// from the trailing end.
inline Volume truncate_slices(const Volume& v, std::int64_t multiple) {
  detail::require(multiple > 0, "truncate_slices: multiple must be positive");
  const Dims3 in = v.dims();
  detail::require(in.d >= multiple, "truncate_slices: depth smaller than multiple");
  const std::int64_t keep = multiple * (in.d / multiple);
  const std::int64_t lead = (in.d - keep) / 2;
  const auto first = v.voxels().begin() + static_cast<std::ptrdiff_t>(lead * v.slice_size());
  std::vector<float> out(first, first + static_cast<std::ptrdiff_t>(keep * v.slice_size()));
  return Volume({keep, in.h, in.w}, v.spacing(), v.domain(), std::move(out));
}

inline std::pair<PatchGrid, std::vector<Volume>> extract_patches(const Volume& v, Dims3 patch) {
  const Dims3 in = v.dims();
  detail::require(patch.d > 0 && patch.h > 0 && patch.w > 0, "patch dims must be positive");
  detail::require(in.d % patch.d == 0 && in.h % patch.h == 0 && in.w % patch.w == 0,
                  "patch dims " + to_string(patch) + " do not tile volume " + to_string(in));
  PatchGrid grid{patch, {in.d / patch.d, in.h / patch.h, in.w / patch.w}, in};
  std::vector<Volume> patches;
  patches.reserve(static_cast<std::size_t>(grid.count()));
  for (std::int64_t gd = 0; gd < grid.grid_dims.d; ++gd)
    for (std::int64_t gh = 0; gh < grid.grid_dims.h; ++gh)
      for (std::int64_t gw = 0; gw < grid.grid_dims.w; ++gw) {
        std::vector<float> vox(static_cast<std::size_t>(patch.count()));
        auto out = vox.begin();
        for (std::int64_t d = 0; d < patch.d; ++d)
          for (std::int64_t h = 0; h < patch.h; ++h) {
            const auto src = v.voxels().begin() +
                             static_cast<std::ptrdiff_t>(v.index(gd * patch.d + d, gh * patch.h + h, gw * patch.w));
            out = std::copy(src, src + patch.w, out);
          }
        patches.emplace_back(patch, v.spacing(), v.domain(), std::move(vox));
      }
  return {grid, std::move(patches)};
}

inline Volume reassemble_patches(const PatchGrid& grid, const std::vector<Volume>& patches) {
  detail::require(static_cast<std::int64_t>(patches.size()) == grid.count(),
                  "reassemble_patches: expected " + std::to_string(grid.count()) + " patches, got " +
                      std::to_string(patches.size()));
  const Dims3 p = grid.patch_dims;
  detail::require(grid.grid_dims.d * p.d == grid.source_dims.d && grid.grid_dims.h * p.h == grid.source_dims.h &&
                      grid.grid_dims.w * p.w == grid.source_dims.w,
                  "reassemble_patches: inconsistent grid");
  for (const auto& patch : patches) detail::require(patch.dims() == p, "reassemble_patches: patch shape mismatch");
  Volume out = Volume::filled(grid.source_dims, 0.0f, patches.front().domain(), patches.front().spacing());
  std::size_t k = 0;
  for (std::int64_t gd = 0; gd < grid.grid_dims.d; ++gd)
    for (std::int64_t gh = 0; gh < grid.grid_dims.h; ++gh)
      for (std::int64_t gw = 0; gw < grid.grid_dims.w; ++gw, ++k) {
        const auto& src = patches[k].voxels();
        for (std::int64_t d = 0; d < p.d; ++d)
          for (std::int64_t h = 0; h < p.h; ++h) {
            const auto from = src.begin() + static_cast<std::ptrdiff_t>((d * p.h + h) * p.w);
            std::copy(from, from + p.w,
                      out.voxels().begin() +
                          static_cast<std::ptrdiff_t>(out.index(gd * p.d + d, gh * p.h + h, gw * p.w)));
          }
      }
  return out;
}

}  // namespace sisr3d
