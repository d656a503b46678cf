#pragma once

// Paired significance protocol: Shapiro-Wilk on the paired differences picks
// either a paired t-test or a Wilcoxon signed-rank test, two-sided at alpha.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sisr3d/error.hpp"

namespace sisr3d::stats {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Acklam's rational approximation polished by two Halley steps.
inline double normal_quantile(double p) {
  detail::require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
    x = x - u / (1 + x * u / 2);
  }
  return x;
}

// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
inline double incomplete_beta(double a, double b, double x) {
  detail::require(a > 0 && b > 0, "incomplete_beta: a and b must be positive");
  detail::require(x >= 0 && x <= 1, "incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const auto cf = [](double a, double b, double x) {
    constexpr double tiny = 1e-300, eps = 1e-16;
    double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
      const double m2 = 2.0 * m;
      double aa = m * (b - m) * x / ((a + m2 - 1) * (a + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < eps) break;
    }
    return h;
  };
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * cf(a, b, x) / a;
  return 1.0 - std::exp(log_front) * cf(b, a, 1.0 - x) / b;
}

// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees.
inline double student_t_two_sided(double t, double df) {
  detail::require(df > 0, "student_t_two_sided: df must be positive");
  if (std::isinf(t)) return 0.0;
  return std::clamp(incomplete_beta(df / 2.0, 0.5, df / (df + t * t)), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk (Royston's approximation for the coefficients and p-value)

struct ShapiroResult {
  double w = 0.0;
  double p = 0.0;
};

inline ShapiroResult shapiro_wilk(std::vector<double> x) {
  const std::size_t n = x.size();
  detail::require(n >= 3 && n <= 50, "shapiro_wilk: sample size must lie in [3, 50]");
  std::sort(x.begin(), x.end());
  detail::require(x.back() - x.front() > 0.0, "shapiro_wilk: sample has zero variance");

  const auto poly = [](const double* c, int order, double v) {
    double r = c[0];
    if (order > 1) {
      double p = v * c[order - 1];
      for (int j = order - 2; j > 0; --j) p = (p + c[j]) * v;
      r += p;
    }
    return r;
  };
  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
  static constexpr double g[] = {-2.273, 0.459};

  const std::size_t half = n / 2;
  const double an = static_cast<double>(n);
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, 6, rsn) - m[0] / ssumm2;
    std::size_t first;
    double fac;
    if (n > 5) {
      first = 2;
      const double a2 = -m[1] / ssumm2 + poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
    } else {
      first = 1;
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
  }

  // W as the squared correlation between ordered data and the coefficients.
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / an;
  double num = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < half; ++i) num += a[i] * (x[n - 1 - i] - x[i]);
  for (double v : x) ss += (v - mean) * (v - mean);
  double w = std::min(1.0, num * num / ss);

  ShapiroResult r{w, 1.0};
  if (n == 3) {
    constexpr double pi6 = 6.0 / M_PI, stqr = M_PI / 3.0;
    r.p = std::clamp(pi6 * (std::asin(std::sqrt(w)) - stqr), 0.0, 1.0);
    return r;
  }
  const double w1 = 1.0 - w;
  if (w1 <= 0.0) return r;
  double y = std::log(w1);
  const double xx = std::log(an);
  double mu, sigma;
  if (n <= 11) {
    const double gamma = poly(g, 2, an);
    if (y >= gamma) {
      r.p = 1e-99;
      return r;
    }
    y = -std::log(gamma - y);
    mu = poly(c3, 4, an);
    sigma = std::exp(poly(c4, 4, an));
  } else {
    mu = poly(c5, 4, xx);
    sigma = std::exp(poly(c6, 3, xx));
  }
  r.p = std::clamp(1.0 - normal_cdf((y - mu) / sigma), 0.0, 1.0);
  return r;
}

// ---------------------------------------------------------------------------
// Paired t-test

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
};

inline TTestResult paired_t_test(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size(), "paired_t_test: samples must have equal length");
  detail::require(x.size() >= 2, "paired_t_test: need at least two pairs");
  const std::size_t n = x.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - y[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) throw DegenerateInputError("paired_t_test: differences have zero variance");
  TTestResult r;
  r.df = static_cast<int>(n - 1);
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided(r.t, r.df);
  return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

struct WilcoxonResult {
  double w = 0.0;  // min(W+, W-)
  double p = 1.0;
  bool exact = false;
  int n = 0;  // pairs left after dropping zero differences
};

inline constexpr int kWilcoxonExactMax = 12;

struct SignedRanks {
  std::vector<double> ranks;  // average ranks of |d|
  std::vector<bool> positive;
  std::vector<int> tie_sizes;
};

inline SignedRanks signed_ranks(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size(), "wilcoxon: samples must have equal length");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] - y[i] != 0.0) d.push_back(x[i] - y[i]);
  if (d.empty()) throw DegenerateInputError("wilcoxon: all differences are zero");
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  SignedRanks sr;
  sr.ranks.assign(d.size(), 0.0);
  sr.positive.assign(d.size(), false);
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) sr.ranks[idx[k]] = avg;
    sr.tie_sizes.push_back(static_cast<int>(j - i + 1));
    i = j + 1;
  }
  for (std::size_t i = 0; i < d.size(); ++i) sr.positive[i] = d[i] > 0;
  return sr;
}

// Normal approximation with tie and continuity corrections.
inline double wilcoxon_normal_p(const SignedRanks& sr, double w) {
  const double n = static_cast<double>(sr.ranks.size());
  const double mu = n * (n + 1) / 4.0;
  double var = n * (n + 1) * (2 * n + 1) / 24.0;
  for (int t : sr.tie_sizes) var -= (static_cast<double>(t) * t * t - t) / 48.0;
  if (var <= 0.0) return 1.0;
  const double z = std::max(0.0, std::abs(w - mu) - 0.5) / std::sqrt(var);
  return std::clamp(2.0 * (1.0 - normal_cdf(z)), 0.0, 1.0);
}

// Exact two-sided p: fraction of the 2^n sign assignments whose statistic
// min(W+, W-) is at most the observed one. Ranks are doubled to stay integral.
inline double wilcoxon_exact_p(const SignedRanks& sr, double w) {
  const std::size_t n = sr.ranks.size();
  detail::require(n <= 30, "wilcoxon_exact_p: sample too large for enumeration");
  std::vector<long> r2(n);
  long total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r2[i] = std::lround(2.0 * sr.ranks[i]);
    total += r2[i];
  }
  const long observed = std::lround(2.0 * w);
  std::uint64_t hits = 0;
  const std::uint64_t patterns = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    long plus = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) plus += r2[i];
    if (std::min(plus, total - plus) <= observed) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(patterns);
}

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
  const SignedRanks sr = signed_ranks(x, y);
  double plus = 0.0, minus = 0.0;
  for (std::size_t i = 0; i < sr.ranks.size(); ++i) (sr.positive[i] ? plus : minus) += sr.ranks[i];
  WilcoxonResult r;
  r.n = static_cast<int>(sr.ranks.size());
  r.w = std::min(plus, minus);
  r.exact = r.n <= kWilcoxonExactMax;
  r.p = r.exact ? wilcoxon_exact_p(sr, r.w) : wilcoxon_normal_p(sr, r.w);
  return r;
}

// ---------------------------------------------------------------------------

enum class TestKind { paired_t, wilcoxon, none };

inline std::string to_string(TestKind k) {
  switch (k) {
    case TestKind::paired_t: return "paired_t";
    case TestKind::wilcoxon: return "wilcoxon";
    case TestKind::none: return "none";
  }
  return "none";
}

struct ComparisonVerdict {
  std::string metric;
  int n = 0;
  double shapiro_w = std::numeric_limits<double>::quiet_NaN();
  double shapiro_p = std::numeric_limits<double>::quiet_NaN();
  TestKind test_used = TestKind::none;
  double statistic = std::numeric_limits<double>::quiet_NaN();
  double p_value = 1.0;
  bool significant = false;
  // Non-empty when the comparison degenerated (e.g. identical samples).
  std::string note;
};

// Never throws on degenerate data: the verdict carries a note instead and is
// reported as not significant.
inline ComparisonVerdict compare_models(const std::vector<double>& a, const std::vector<double>& b,
                                        const std::string& metric = "", double alpha = 0.05) {
  ComparisonVerdict v;
  v.metric = metric;
  v.n = static_cast<int>(a.size());
  if (a.size() != b.size() || a.size() < 3) {
    v.note = "need at least 3 paired values of equal length";
    return v;
  }
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  for (double x : d)
    if (!std::isfinite(x)) {
      v.note = "non-finite paired difference";
      return v;
    }
  try {
    const ShapiroResult sw = shapiro_wilk(d);
    v.shapiro_w = sw.w;
    v.shapiro_p = sw.p;
    if (sw.p >= alpha) {
      const TTestResult t = paired_t_test(a, b);
      v.test_used = TestKind::paired_t;
      v.statistic = t.t;
      v.p_value = t.p;
    } else {
      const WilcoxonResult w = wilcoxon_signed_rank(a, b);
      v.test_used = TestKind::wilcoxon;
      v.statistic = w.w;
      v.p_value = w.p;
    }
  } catch (const std::exception& e) {
    v.note = e.what();
    v.test_used = TestKind::none;
    v.p_value = 1.0;
    v.significant = false;
    return v;
  }
  v.significant = v.p_value < alpha;
  return v;
}

}  // namespace sisr3d::stats
