#pragma once

// Test-only oracles, kept independent of the library's evaluation paths:
// a long-double Taylor-series normal CDF, a Simpson-rule integration of the
// t density (no incomplete beta anywhere), and Monte Carlo samplers built on
// std::mt19937_64. Nothing in here may include pi0kit headers other than for
// the types under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracles {

// Phi(x) via the Taylor series Phi(x) = 1/2 + phi(x) * sum x^(2k+1)/(1*3*...*(2k+1)),
// evaluated in long double. Converges fast for |x| <= 10.
inline long double normal_cdf_series(long double x) {
  const long double phi =
      std::exp(-0.5L * x * x) / std::sqrt(2.0L * 3.141592653589793238462643383279503L);
  long double term = x;
  long double sum = x;
  for (int k = 1; k < 400; ++k) {
    term *= x * x / (2.0L * k + 1.0L);
    sum += term;
    if (std::fabs(term) < 1e-24L * std::fabs(sum)) break;
  }
  return 0.5L + phi * sum;
}

inline long double t_pdf_ld(long double x, long double df) {
  const long double logf = std::lgamma(0.5L * (df + 1.0L)) - std::lgamma(0.5L * df) -
                           0.5L * std::log(df * 3.141592653589793238462643383279503L) -
                           0.5L * (df + 1.0L) * std::log1p(x * x / df);
  return std::exp(logf);
}

// Adaptive Simpson in long double.
inline long double simpson_rec(const std::function<long double(long double)>& f,
                               long double a, long double b, long double fa, long double fm,
                               long double fb, long double whole, long double tol, int depth) {
  const long double m = 0.5L * (a + b);
  const long double lm = 0.5L * (a + m);
  const long double rm = 0.5L * (m + b);
  const long double flm = f(lm);
  const long double frm = f(rm);
  const long double left = (m - a) / 6.0L * (fa + 4.0L * flm + fm);
  const long double right = (b - m) / 6.0L * (fm + 4.0L * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0L * tol)
    return left + right + (left + right - whole) / 15.0L;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5L * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5L * tol, depth - 1);
}

inline long double integrate(const std::function<long double(long double)>& f,
                             long double a, long double b, long double tol = 1e-15L) {
  const long double fa = f(a), fb = f(b), fm = f(0.5L * (a + b));
  const long double whole = (b - a) / 6.0L * (fa + 4.0L * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

// Central-t CDF by direct integration of the density from 0 to x.
inline long double t_cdf_integral(long double x, long double df) {
  if (x == 0.0L) return 0.5L;
  const long double ax = std::fabs(x);
  const long double mass =
      integrate([df](long double u) { return t_pdf_ld(u, df); }, 0.0L, ax);
  return x > 0.0L ? 0.5L + mass : 0.5L - mass;
}

// Upper p-point by bisection on the integral CDF.
inline long double t_quantile_integral(long double p, long double df) {
  long double lo = -1e6L, hi = 1e6L;
  const long double target = 1.0L - p;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (t_cdf_integral(mid, df) < target) lo = mid; else hi = mid;
  }
  return 0.5L * (lo + hi);
}

struct MeanWithError {
  double mean;
  double std_error;
};

// Monte Carlo mean of f(T) where T = (Z + ncp) / sqrt(chi2_df / df).
inline MeanWithError noncentral_t_mc(std::uint64_t seed, std::size_t draws, double df,
                                     double ncp, const std::function<double(double)>& f) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::gamma_distribution<double> chi2(0.5 * df, 2.0);
  long double sum = 0.0L, sum2 = 0.0L;
  for (std::size_t i = 0; i < draws; ++i) {
    const double t = (normal(gen) + ncp) / std::sqrt(chi2(gen) / df);
    const double v = f(t);
    sum += v;
    sum2 += static_cast<long double>(v) * v;
  }
  const double mean = static_cast<double>(sum / draws);
  const double var = static_cast<double>(sum2 / draws) - mean * mean;
  return {mean, std::sqrt(std::max(0.0, var) / draws)};
}

// Kolmogorov-Smirnov statistic against uniform(0,1).
inline double ks_uniform(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double lo = i / n;
    const double hi = (i + 1) / n;
    d = std::max(d, std::max(values[i] - lo, hi - values[i]));
  }
  return d;
}

// Asymptotic KS critical value at level alpha.
inline double ks_critical(double alpha, std::size_t n) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

}  // namespace oracles
