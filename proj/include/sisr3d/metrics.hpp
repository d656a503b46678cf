#pragma once

// PSNR / SSIM / RMSE on normalized volumes, evaluated on a 0-255 scale, and
// the per-volume report that aggregates them as mean (sample std).

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sisr3d/voxio.hpp"

namespace sisr3d {

inline constexpr double kPeak = 255.0;

namespace detail {
inline void require_comparable(const Volume& a, const Volume& b, const char* what) {
  require(a.dims() == b.dims(), std::string(what) + ": dims " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  require(a.domain() == IntensityDomain::Normalized && b.domain() == IntensityDomain::Normalized,
          std::string(what) + ": both volumes must be normalized");
}

inline double mse_255(const Volume& a, const Volume& b) {
  double acc = 0.0;
  const auto& x = a.voxels();
  const auto& y = b.voxels();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = kPeak * (static_cast<double>(x[i]) - static_cast<double>(y[i]));
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

inline double psnr_from_rmse(double rmse) {
  return rmse > 0.0 ? 20.0 * std::log10(kPeak / rmse) : std::numeric_limits<double>::infinity();
}
}  // namespace detail

inline double rmse(const Volume& a, const Volume& b) {
  detail::require_comparable(a, b, "rmse");
  return std::sqrt(detail::mse_255(a, b));
}

// Identical inputs give +infinity.
inline double psnr(const Volume& a, const Volume& b) {
  detail::require_comparable(a, b, "psnr");
  return detail::psnr_from_rmse(std::sqrt(detail::mse_255(a, b)));
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double c1() const { return (k1 * kPeak) * (k1 * kPeak); }
  double c2() const { return (k2 * kPeak) * (k2 * kPeak); }
};

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    s += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Mean SSIM of one H x W plane pair (values already on the 0-255 scale) over
// all window positions fully inside the plane. Separable filtering.
inline double ssim_plane(const double* x, const double* y, std::int64_t H, std::int64_t W,
                         const SsimParams& p = {}) {
  const auto g = gaussian_window(p.window, p.sigma);
  const std::int64_t K = p.window, Ho = H - K + 1, Wo = W - K + 1;
  const std::int64_t n = H * W;
  std::array<std::vector<double>, 5> src;
  for (auto& s : src) s.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    src[0][i] = x[i];
    src[1][i] = y[i];
    src[2][i] = x[i] * x[i];
    src[3][i] = y[i] * y[i];
    src[4][i] = x[i] * y[i];
  }
  std::array<std::vector<double>, 5> filt;
  std::vector<double> rows(static_cast<std::size_t>(H * Wo));
  for (int m = 0; m < 5; ++m) {
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < Wo; ++w) {
        double s = 0.0;
        for (std::int64_t k = 0; k < K; ++k) s += g[static_cast<std::size_t>(k)] * src[m][h * W + w + k];
        rows[h * Wo + w] = s;
      }
    filt[m].assign(static_cast<std::size_t>(Ho * Wo), 0.0);
    for (std::int64_t h = 0; h < Ho; ++h)
      for (std::int64_t w = 0; w < Wo; ++w) {
        double s = 0.0;
        for (std::int64_t k = 0; k < K; ++k) s += g[static_cast<std::size_t>(k)] * rows[(h + k) * Wo + w];
        filt[m][h * Wo + w] = s;
      }
  }
  const double c1 = p.c1(), c2 = p.c2();
  double total = 0.0;
  for (std::int64_t i = 0; i < Ho * Wo; ++i) {
    const double mx = filt[0][i], my = filt[1][i];
    const double vx = filt[2][i] - mx * mx;
    const double vy = filt[3][i] - my * my;
    const double cxy = filt[4][i] - mx * my;
    total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(Ho * Wo);
}

// 2D SSIM per axial slice (11x11 Gaussian, sigma 1.5), averaged over slices.
inline double ssim(const Volume& a, const Volume& b, const SsimParams& p = {}) {
  detail::require_comparable(a, b, "ssim");
  const Dims3 d = a.dims();
  detail::require(d.h >= p.window && d.w >= p.window, "ssim: in-plane dims must be at least the window size");
  const std::int64_t plane = d.h * d.w;
  std::vector<double> x(static_cast<std::size_t>(plane)), y(static_cast<std::size_t>(plane));
  double total = 0.0;
  for (std::int64_t s = 0; s < d.d; ++s) {
    for (std::int64_t i = 0; i < plane; ++i) {
      x[i] = kPeak * a.voxels()[s * plane + i];
      y[i] = kPeak * b.voxels()[s * plane + i];
    }
    total += ssim_plane(x.data(), y.data(), d.h, d.w, p);
  }
  return total / static_cast<double>(d.d);
}

// ---------------------------------------------------------------------------

struct VolumeScore {
  std::string volume_id;
  double psnr = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
};

inline VolumeScore score_volume(const std::string& id, const Volume& prediction, const Volume& truth) {
  detail::require_comparable(prediction, truth, "score_volume");
  const double r = std::sqrt(detail::mse_255(prediction, truth));
  return {id, detail::psnr_from_rmse(r), ssim(prediction, truth), r};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Sample standard deviation; a set of identical values (including infinities)
// has spread 0.
inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  bool all_equal = true;
  for (double x : v) all_equal = all_equal && x == v.front();
  if (all_equal) return {v.front(), 0.0};
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() < 2 || !std::isfinite(r.mean)) return {r.mean, v.size() < 2 ? 0.0 : std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return r;
}

struct MetricReport {
  std::vector<VolumeScore> volumes;

  std::vector<double> column(double VolumeScore::*field) const {
    std::vector<double> out;
    for (const auto& v : volumes) out.push_back(v.*field);
    return out;
  }
  MeanStd psnr() const { return mean_std(column(&VolumeScore::psnr)); }
  MeanStd ssim() const { return mean_std(column(&VolumeScore::ssim)); }
  MeanStd rmse() const { return mean_std(column(&VolumeScore::rmse)); }
};

namespace detail {
inline std::string fmt_num(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}
inline std::string fmt_cell(const MeanStd& m, int precision) {
  return fmt_num(m.mean, precision) + " (" + fmt_num(m.std, precision) + ")";
}
inline double parse_num(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("bad number '" + s + "'");
  }
}
}  // namespace detail

// volume_id,psnr,ssim,rmse per volume, then one `aggregate` row whose cells
// read "mean (std)".
inline void write_report_csv(const MetricReport& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "volume_id,psnr,ssim,rmse\n";
  for (const auto& v : r.volumes)
    os << v.volume_id << "," << detail::fmt_num(v.psnr, 6) << "," << detail::fmt_num(v.ssim, 8) << ","
       << detail::fmt_num(v.rmse, 6) << "\n";
  os << "aggregate," << detail::fmt_cell(r.psnr(), 4) << "," << detail::fmt_cell(r.ssim(), 6) << ","
     << detail::fmt_cell(r.rmse(), 4) << "\n";
  if (!os) throw IoError("short write to " + path.string());
}

inline MetricReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != "volume_id,psnr,ssim,rmse")
    throw FormatError("unexpected report header in " + path.string());
  MetricReport r;
  while (std::getline(is, line)) {
    line = detail::trim(line);
    if (line.empty() || line.rfind("aggregate,", 0) == 0) continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != 4) throw FormatError("malformed report row: " + line);
    r.volumes.push_back({cells[0], detail::parse_num(cells[1]), detail::parse_num(cells[2]),
                         detail::parse_num(cells[3])});
  }
  return r;
}

}  // namespace sisr3d
