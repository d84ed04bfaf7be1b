#pragma once

// Independent test oracles. These stay decoupled from the implementation
// paths they check: the exponential oracle fixes its own scaling rule and
// term count, statistical thresholds are hardcoded critical values.

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "fcp/matrix.hpp"

namespace oracles {

/// 30-term scaled Taylor series for exp(A): halve until the infinity norm is
/// at most 1, sum exactly 30 terms, square back.
inline fcp::Matrix expm_taylor30(const fcp::Matrix& a) {
  int s = 0;
  double norm = a.inf_norm();
  while (norm > 1.0) {
    norm /= 2.0;
    ++s;
  }
  fcp::Matrix scaled = a * std::ldexp(1.0, -s);
  fcp::Matrix result = fcp::Matrix::identity(a.rows());
  fcp::Matrix term = fcp::Matrix::identity(a.rows());
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled;
    term *= 1.0 / k;
    result += term;
  }
  for (int i = 0; i < s; ++i) result = result * result;
  return result;
}

/// Chi-square critical values at significance 0.01 (upper tail).
inline double chi2_crit_01(int df) {
  static const std::map<int, double> table = {
      {1, 6.6349},  {2, 9.2103},  {3, 11.3449}, {4, 13.2767}, {5, 15.0863},
      {6, 16.8119}, {7, 18.4753}, {8, 20.0902}, {9, 21.6660}, {10, 23.2093},
      {11, 24.7250}, {12, 26.2170}, {15, 30.5779}, {19, 36.1909}, {20, 37.5662},
      {24, 42.9798}, {30, 50.8922}, {99, 134.6416}};
  return table.at(df);
}

/// Two-sample Kolmogorov-Smirnov critical distance at significance 0.01.
inline double ks_crit_01(std::size_t n, std::size_t m) {
  double c = 1.62762;
  return c * std::sqrt((static_cast<double>(n) + static_cast<double>(m)) /
                       (static_cast<double>(n) * static_cast<double>(m)));
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    double fa = static_cast<double>(i) / static_cast<double>(a.size());
    double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

/// Total variation distance between two distributions over shared support.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

/// Pearson chi-square statistic of observed counts against expected counts.
inline double chi2_statistic(std::span<const double> observed, std::span<const double> expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  return stat;
}

}  // namespace oracles
