#pragma once

// Expected p-value under the alternative, e_delta, for the three test
// families, plus the upper-tail probability Q_delta(lambda). The t-family
// expectation integrates the noncentral CDF against the two half-line
// truncated t densities:
//
//   e_delta = E_{X ~ t(0,inf)} F_nc(X)  -  E_{X ~ t(-inf,0)} F_nc(X)
//
// which is 0.5 at delta = 0, falls toward 0 as |delta| grows, and is
// symmetric in delta. The Z-family expectation has the closed form
// 1 - Phi(sqrt(n) delta / sqrt(2)).
//
// Per-hypothesis evaluations are memoized on |delta| quantized to a fixed
// grid; values are computed from the quantized argument, so cache state can
// never change a result.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <vector>

#include "pi0kit/distributions.hpp"
#include "pi0kit/errors.hpp"
#include "pi0kit/testing.hpp"

namespace pi0kit {

struct EpvRecord {
  std::size_t hypothesis_index = 0;
  double e_hat = 0.5;  // in [0, 0.5]
};

struct EpvOptions {
  QuadratureOptions quadrature{};
  double memo_step = 1e-4;
  bool memoize = true;
};

namespace detail {

inline double quantize_abs(double delta, const EpvOptions& opt) {
  const double ad = std::fabs(delta);
  if (!opt.memoize || !(opt.memo_step > 0.0)) return ad;
  return std::llround(ad / opt.memo_step) * opt.memo_step;
}

struct EpvCache {
  std::map<std::array<std::uint64_t, 3>, double> e_values;
  std::map<std::array<std::uint64_t, 4>, double> q_values;
  std::map<std::array<std::uint64_t, 2>, double> quantiles;
  std::shared_mutex mutex;
};

inline EpvCache& epv_cache() {
  static EpvCache cache;
  return cache;
}

inline std::uint64_t dbits(double v) {
  std::uint64_t out;
  __builtin_memcpy(&out, &v, sizeof(v));
  return out;
}

template <class Key, class Map, class Compute>
double memoized(Map EpvCache::* field, const Key& key, bool enabled, Compute&& compute) {
  if (!enabled) return compute();
  auto& cache = epv_cache();
  {
    std::shared_lock lock(cache.mutex);
    const auto& map = cache.*field;
    auto it = map.find(key);
    if (it != map.end()) return it->second;
  }
  const double value = compute();
  std::unique_lock lock(cache.mutex);
  return (cache.*field).emplace(key, value).first->second;
}

inline double e_delta_t_at(double abs_delta, double df, double ncp_scale,
                           const QuadratureOptions& quad) {
  const TDist dist(df);
  const NoncentralTDist nc(df, ncp_scale * abs_delta);
  const auto cdf = [&](double x) { return noncentral_t_cdf(x, nc); };
  const double positive =
      truncated_t_expectation(cdf, dist, TruncationRegion::positive_half(), quad);
  const double negative =
      truncated_t_expectation(cdf, dist, TruncationRegion::negative_half(), quad);
  double e = positive - negative;
  if (e < 0.0) e = 0.0;
  if (e > 0.5) e = 0.5;
  return e;
}

}  // namespace detail

// One-sided Z family: e_delta reduces to 1 - Phi(sqrt(n) delta / sqrt(2)).
inline double e_delta_z(double delta, int n) {
  if (!(delta >= 0.0)) throw std::invalid_argument("e_delta_z requires delta >= 0");
  if (n < 1) throw std::invalid_argument("e_delta_z requires n >= 1");
  return 1.0 - normal_cdf(std::sqrt(static_cast<double>(n)) * delta *
                          0.7071067811865475244008443621048490393);
}

// Shared t-family core parameterized by (df, ncp scale).
inline double e_delta_t(double delta, double df, double ncp_scale,
                        const EpvOptions& opt = {}) {
  if (!(df > 0.0)) throw std::invalid_argument("e_delta_t requires df > 0");
  if (!(ncp_scale > 0.0)) throw std::invalid_argument("e_delta_t requires ncp_scale > 0");
  const double ad = detail::quantize_abs(delta, opt);
  if (ad == 0.0) return 0.5;
  const std::array<std::uint64_t, 3> key{detail::dbits(df), detail::dbits(ncp_scale),
                                         detail::dbits(ad)};
  return detail::memoized(&detail::EpvCache::e_values, key, opt.memoize, [&] {
    return detail::e_delta_t_at(ad, df, ncp_scale, opt.quadrature);
  });
}

inline double e_delta_t1(double delta, int n, const EpvOptions& opt = {}) {
  if (n < 2) throw std::invalid_argument("e_delta_t1 requires n >= 2");
  return e_delta_t(delta, static_cast<double>(n - 1), std::sqrt(static_cast<double>(n)), opt);
}

inline double e_delta_t2(double delta, int n1, int n2, const EpvOptions& opt = {}) {
  if (n1 < 2 || n2 < 2) throw std::invalid_argument("e_delta_t2 requires both groups >= 2");
  const double df = static_cast<double>(n1 + n2 - 2);
  const double scale = std::sqrt(static_cast<double>(n1) * static_cast<double>(n2) /
                                 static_cast<double>(n1 + n2));
  return e_delta_t(delta, df, scale, opt);
}

// P(p > lambda) for a two-sided t p-value under effect delta:
// F_nc(t_{df;lambda/2}) - F_nc(-t_{df;lambda/2}). Equals 1 - lambda at delta 0.
inline double q_delta(double lambda, double delta, double df, double ncp_scale,
                      const EpvOptions& opt = {}) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::domain_error("q_delta requires lambda in (0,1)");
  if (!(df > 0.0) || !(ncp_scale > 0.0))
    throw std::invalid_argument("q_delta requires df > 0 and ncp_scale > 0");
  const double ad = detail::quantize_abs(delta, opt);
  if (ad == 0.0) return 1.0 - lambda;

  const std::array<std::uint64_t, 2> qkey{detail::dbits(df), detail::dbits(lambda)};
  const double upper = detail::memoized(&detail::EpvCache::quantiles, qkey, opt.memoize, [&] {
    return t_quantile_upper(0.5 * lambda, TDist(df));
  });

  const std::array<std::uint64_t, 4> key{detail::dbits(df), detail::dbits(ncp_scale),
                                         detail::dbits(lambda), detail::dbits(ad)};
  return detail::memoized(&detail::EpvCache::q_values, key, opt.memoize, [&] {
    const NoncentralTDist nc(df, ncp_scale * ad);
    double q = noncentral_t_cdf(upper, nc) - noncentral_t_cdf(-upper, nc);
    if (q < 0.0) q = 0.0;
    if (q > 1.0) q = 1.0;
    return q;
  });
}

// e_{delta-hat_i} for each outcome of a single-family batch, order preserved.
inline std::vector<EpvRecord> epv_for_outcomes(const std::vector<TestOutcome>& outcomes,
                                               const EpvOptions& opt = {}) {
  std::vector<EpvRecord> records;
  records.reserve(outcomes.size());
  if (outcomes.empty()) return records;
  const TestFamily family = outcomes.front().family;
  const double df = outcomes.front().df;
  const double scale = outcomes.front().ncp_scale;
  for (const auto& o : outcomes) {
    if (o.family != family)
      throw family_mix_error("epv_for_outcomes: outcomes mix test families");
    if (o.df != df || o.ncp_scale != scale)
      throw family_mix_error("epv_for_outcomes: outcomes mix df or ncp scales");
  }
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    double e;
    if (family == TestFamily::z_one_sided) {
      e = 1.0 - normal_cdf(o.ncp_scale * std::max(0.0, o.effect_size_hat) *
                           0.7071067811865475244008443621048490393);
    } else {
      e = e_delta_t(o.effect_size_hat, df, scale, opt);
    }
    records.push_back({i, e});
  }
  return records;
}

}  // namespace pi0kit
