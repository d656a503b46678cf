#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

// Two-sided exact Wilcoxon p by recursive sign enumeration. Ranks are computed
// by counting (rank = #smaller + (#equal + 1) / 2), zeros dropped.
inline double wilcoxon_enumerated_p(const std::vector<double>& d_in, double* w_out = nullptr) {
  std::vector<double> d;
  for (double v : d_in)
    if (v != 0.0) d.push_back(v);
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  double plus = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) ++less;
      else if (std::abs(d[j]) == std::abs(d[i])) ++equal;
    }
    rank[i] = less + (equal + 1) / 2;
    total += rank[i];
    if (d[i] > 0) plus += rank[i];
  }
  const double w = std::min(plus, total - plus);
  if (w_out) *w_out = w;
  long hits = 0, all = 0;
  auto rec = [&](auto&& self, std::size_t i, double acc) -> void {
    if (i == n) {
      ++all;
      if (std::min(acc, total - acc) <= w + 1e-9) ++hits;
      return;
    }
    self(self, i + 1, acc);
    self(self, i + 1, acc + rank[i]);
  };
  rec(rec, 0, 0.0);
  return static_cast<double>(hits) / static_cast<double>(all);
}
