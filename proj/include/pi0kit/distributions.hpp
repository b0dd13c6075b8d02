#pragma once

// Numerical kernel shared by every other module: standard normal and
// (non)central Student-t CDFs, central-t upper quantiles, and expectations
// of bounded functions against half-line truncated t densities.
// Everything here is pure, reentrant and deterministic.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pi0kit/errors.hpp"

namespace pi0kit {

// Central Student-t distribution with df > 0.
struct TDist {
  double df;
  explicit TDist(double df_) : df(df_) {
    if (!(df > 0.0)) throw std::invalid_argument("t distribution requires df > 0");
  }
};

// Noncentral Student-t: df > 0, finite noncentrality.
struct NoncentralTDist {
  double df;
  double ncp;
  NoncentralTDist(double df_, double ncp_) : df(df_), ncp(ncp_) {
    if (!(df > 0.0)) throw std::invalid_argument("noncentral t requires df > 0");
    if (!std::isfinite(ncp)) throw std::invalid_argument("noncentral t requires finite ncp");
  }
};

// Truncation region (a, b) with a < b. All uses in this library are the two
// half-lines split at zero.
struct TruncationRegion {
  double lower;
  double upper;
  TruncationRegion(double lower_, double upper_) : lower(lower_), upper(upper_) {
    if (!(lower < upper)) throw std::invalid_argument("truncation region requires lower < upper");
  }
  static TruncationRegion negative_half() {
    return TruncationRegion(-std::numeric_limits<double>::infinity(), 0.0);
  }
  static TruncationRegion positive_half() {
    return TruncationRegion(0.0, std::numeric_limits<double>::infinity());
  }
  bool is_negative_half() const { return std::isinf(lower) && lower < 0.0 && upper == 0.0; }
  bool is_positive_half() const { return lower == 0.0 && std::isinf(upper) && upper > 0.0; }
};

// Tolerances for the truncated-expectation quadrature. max_bisections bounds
// how many adaptive refinement levels run before giving up.
struct QuadratureOptions {
  double abs_tol = 1e-9;
  int max_bisections = 1;
};

inline double normal_cdf(double x) {
  // 0.5 * erfc(-x / sqrt(2)); good to ~1 ulp over the whole real line.
  return 0.5 * std::erfc(-x * 0.7071067811865475244008443621048490393);
}

namespace detail {

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double ibeta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  return h;  // converged to working precision long before 400 terms in practice
}

// Regularized incomplete beta I_x(a, b).
inline double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * ibeta_cf(a, b, x) / a;
  }
  return 1.0 - front * ibeta_cf(b, a, 1.0 - x) / b;
}

}  // namespace detail

inline double t_pdf(double x, const TDist& dist) {
  const double v = dist.df;
  const double logf = std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
                      0.5 * std::log(v * 3.14159265358979323846) -
                      0.5 * (v + 1.0) * std::log1p(x * x / v);
  return std::exp(logf);
}

inline double t_cdf(double x, const TDist& dist) {
  const double v = dist.df;
  if (std::isinf(v)) return normal_cdf(x);
  const double half_tail = 0.5 * detail::ibeta(0.5 * v, 0.5, v / (v + x * x));
  return x >= 0.0 ? 1.0 - half_tail : half_tail;
}

// Upper p-point of the central t: t_cdf(result) == 1 - p.
inline double t_quantile_upper(double p, const TDist& dist) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("t quantile requires p in (0,1)");
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -t_quantile_upper(1.0 - p, dist);

  // Now target cdf value is 1 - p > 0.5, so the root is positive.
  const double target = 1.0 - p;
  double lo = 0.0;
  double hi = 1.0;
  while (t_cdf(hi, dist) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) break;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = t_cdf(x, dist) - target;
    if (f > 0.0) hi = x; else lo = x;
    if (std::fabs(f) < 1e-14) break;
    const double dens = t_pdf(x, dist);
    double next = dens > 0.0 ? x - f / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) break;
    x = next;
  }
  return x;
}

namespace detail {

// Series part of the noncentral-t CDF for x >= 0: pairs of regularized
// incomplete beta terms with half-integer and integer first parameter,
// weighted by Poisson-type coefficients and advanced by recurrence.
inline double noncentral_t_cdf_series(double x, double nu, double delta) {
  const double base = normal_cdf(-delta);
  if (x == 0.0) return base;
  const double y = x * x / (x * x + nu);
  const double lambda = 0.5 * delta * delta;

  double p = std::exp(-lambda);
  double q = std::exp(-lambda) * delta * 0.7071067811865475244 /
             std::tgamma(1.5);
  double a_term = ibeta(0.5, 0.5 * nu, y);        // I_y(j+1/2, nu/2) at j=0
  double b_term = ibeta(1.0, 0.5 * nu, y);        // I_y(j+1,   nu/2) at j=0
  const double log_y = std::log(y);
  const double log_1my = std::log1p(-y);
  // Increment subtracted from I_y(a, nu/2) when a -> a+1:
  //   y^a (1-y)^(nu/2) / (a * Beta(a, nu/2))
  double ta = std::exp(0.5 * log_y + 0.5 * nu * log_1my -
                       std::log(0.5) - log_beta(0.5, 0.5 * nu));
  double tb = std::exp(log_y + 0.5 * nu * log_1my - log_beta(1.0, 0.5 * nu));

  double sum = p * a_term + q * b_term;
  double poisson_mass = p;
  for (int j = 0; j < 3000; ++j) {
    a_term -= ta;
    b_term -= tb;
    ta *= y * (j + 0.5 + 0.5 * nu) / (j + 1.5);
    tb *= y * (j + 1.0 + 0.5 * nu) / (j + 2.0);
    p *= lambda / (j + 1.0);
    q *= lambda / (j + 1.5);
    const double term = p * a_term + q * b_term;
    sum += term;
    poisson_mass += p;
    const double err_bound = 2.0 * (1.0 - poisson_mass) * a_term;
    if (err_bound < 1e-13 && std::fabs(term) < 1e-13) break;
  }
  double result = base + 0.5 * sum;
  if (result < 0.0) result = 0.0;
  if (result > 1.0) result = 1.0;
  return result;
}

// Fallback for |ncp| beyond the series' underflow range: condition on the
// chi-square denominator, F(x; nu, d) = E_{U~chi2(nu)} Phi(x sqrt(U/nu) - d),
// and integrate over s in (0,1) with U = nu s/(1-s).
inline double noncentral_t_cdf_integral(double x, double nu, double delta);

inline double noncentral_t_cdf_impl(double x, double nu, double delta) {
  if (x < 0.0) return 1.0 - noncentral_t_cdf_impl(-x, nu, -delta);
  if (std::fabs(delta) > 37.0) return noncentral_t_cdf_integral(x, nu, delta);
  return noncentral_t_cdf_series(x, nu, delta);
}

}  // namespace detail

inline double noncentral_t_cdf(double x, const NoncentralTDist& dist) {
  return detail::noncentral_t_cdf_impl(x, dist.df, dist.ncp);
}

namespace detail {

// Gauss-Legendre nodes/weights on (-1, 1), Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre_rule(int order) {
  std::vector<double> nodes(order), weights(order);
  const int half = (order + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-based initial guess.
    double x = std::cos(3.14159265358979323846 * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[order - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[i] = w;
    weights[order - 1 - i] = w;
  }
  return {nodes, weights};
}

inline const std::pair<std::vector<double>, std::vector<double>>& gl64() {
  static const auto rule = gauss_legendre_rule(64);
  return rule;
}

// One 64-point panel of the half-line expectation integrand, mapped onto
// s in (a, b) subset (0, 1) through x = +-s/(1-s).
template <class F>
double half_line_panel(const F& f, const TDist& dist, double sign, double a, double b) {
  const auto& [nodes, weights] = gl64();
  const double mid = 0.5 * (a + b);
  const double halfwidth = 0.5 * (b - a);
  double acc = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double s = mid + halfwidth * nodes[k];
    const double one_minus = 1.0 - s;
    const double x = sign * s / one_minus;
    const double jacobian = 1.0 / (one_minus * one_minus);
    acc += weights[k] * f(x) * 2.0 * t_pdf(x, dist) * jacobian;
  }
  return acc * halfwidth;
}

template <class F>
double half_line_adaptive(const F& f, const TDist& dist, double sign, double a, double b,
                          double tol, int bisections_left) {
  const double coarse = half_line_panel(f, dist, sign, a, b);
  const double mid = 0.5 * (a + b);
  const double fine =
      half_line_panel(f, dist, sign, a, mid) + half_line_panel(f, dist, sign, mid, b);
  if (std::fabs(fine - coarse) <= tol) return fine;
  if (bisections_left <= 0) {
    throw quadrature_error("truncated-t expectation did not converge within the bisection cap");
  }
  // Children keep the parent tolerance: halving it outruns the refinement
  // rate on integrands with integrable endpoint growth, and the leaf count
  // is already bounded by the bisection cap.
  return half_line_adaptive(f, dist, sign, a, mid, tol, bisections_left - 1) +
         half_line_adaptive(f, dist, sign, mid, b, tol, bisections_left - 1);
}

}  // namespace detail

// E[f(X)] for X ~ t_df truncated to one half-line at zero, i.e.
// integral over the region of f(x) * 2 f_t(x) dx (the half-line carries
// probability 1/2, so the truncated density is the t density divided by 1/2).
// The half-line is mapped onto (0,1) by x = +-s/(1-s); the integrand stays
// smooth there for bounded f, unlike the CDF substitution, which pushes any
// sharp feature of f in the far tail into a corner no fixed-order panel can
// resolve. Deterministic: identical inputs give bit-identical results.
template <class F>
double truncated_t_expectation(const F& f, const TDist& dist, const TruncationRegion& region,
                               const QuadratureOptions& opt = {}) {
  double sign;
  if (region.is_negative_half()) {
    sign = -1.0;
  } else if (region.is_positive_half()) {
    sign = 1.0;
  } else {
    throw std::invalid_argument("truncated_t_expectation supports only half-lines at 0");
  }
  return detail::half_line_adaptive(f, dist, sign, 0.0, 1.0, opt.abs_tol, opt.max_bisections);
}

namespace detail {

// Generic adaptive Gauss-Legendre on a plain interval (used by the
// large-ncp fallback; never throws, returns its best refinement).
template <class F>
double plain_panel(const F& f, double a, double b) {
  const auto& [nodes, weights] = gl64();
  const double mid = 0.5 * (a + b);
  const double halfwidth = 0.5 * (b - a);
  double acc = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    acc += weights[k] * f(mid + halfwidth * nodes[k]);
  return acc * halfwidth;
}

template <class F>
double plain_adaptive(const F& f, double a, double b, double tol, int depth) {
  const double coarse = plain_panel(f, a, b);
  const double mid = 0.5 * (a + b);
  const double fine = plain_panel(f, a, mid) + plain_panel(f, mid, b);
  if (std::fabs(fine - coarse) <= tol || depth <= 0) return fine;
  return plain_adaptive(f, a, mid, 0.5 * tol, depth - 1) +
         plain_adaptive(f, mid, b, 0.5 * tol, depth - 1);
}

inline double noncentral_t_cdf_integral(double x, double nu, double delta) {
  // x >= 0 guaranteed by the reflection in the dispatcher.
  const double log_norm = -0.5 * nu * std::log(2.0) - std::lgamma(0.5 * nu);
  const auto integrand = [&](double s) {
    const double one_minus = 1.0 - s;
    const double u = nu * s / one_minus;
    if (!(u > 0.0) || !std::isfinite(u)) return 0.0;
    const double log_density = log_norm + (0.5 * nu - 1.0) * std::log(u) - 0.5 * u;
    const double jac = nu / (one_minus * one_minus);
    const double phi = normal_cdf(x * std::sqrt(u / nu) - delta);
    return phi * std::exp(log_density) * jac;
  };
  double result = plain_adaptive(integrand, 0.0, 1.0, 1e-11, 10);
  if (result < 0.0) result = 0.0;
  if (result > 1.0) result = 1.0;
  return result;
}

}  // namespace detail

}  // namespace pi0kit
