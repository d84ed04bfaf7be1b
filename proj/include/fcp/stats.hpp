#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace fcp {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double std_normal_logpdf(double x) { return -0.5 * (kLog2Pi + x * x); }

inline double normal_logpdf(double x, double mean, double sigma) {
  double z = (x - mean) / sigma;
  return -std::log(sigma) - 0.5 * (kLog2Pi + z * z);
}

inline double std_normal_logpdf(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std_normal_logpdf(v);
  return s;
}

/// Gamma(1,1) == Exponential(1).
inline double exp1_logpdf(double x) { return x > 0.0 ? -x : kNegInf; }

inline double lognormal_logpdf(double x, double loc, double scale) {
  if (!(x > 0.0)) return kNegInf;
  double lx = std::log(x);
  double z = (lx - loc) / scale;
  return -lx - std::log(scale) - 0.5 * (kLog2Pi + z * z);
}

/// Isotropic Gaussian with *variance* tau per coordinate.
inline double gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                              double tau) {
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - mean[i];
    q += d * d;
  }
  double n = static_cast<double>(x.size());
  return -0.5 * n * (kLog2Pi + std::log(tau)) - 0.5 * q / tau;
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// log((1/K) sum exp(xs)) with max-shift; the stable mean-exp used by the
/// evidence estimator.
inline double log_mean_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_stderr(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size() - 1);
  return std::sqrt(v / static_cast<double>(xs.size()));
}

}  // namespace fcp
