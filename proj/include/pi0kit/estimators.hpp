#pragma once

// pi0 estimators over a family of simultaneous tests:
//
//   storey_bootstrap  Storey's pi0(lambda) = W(lambda)/[m(1-lambda)] with the
//                     bootstrap selection of lambda over a grid.
//   proposed_e        (p_bar - e_hat)/(0.5 - e_hat) clamped to [0,1], where
//                     e_hat averages the d = floor(m(1-pi0_initial)) smallest
//                     per-hypothesis expected p-values.
//   proposed_e_iterated  one extra pass feeding the first estimate back in
//                     as the initial value.
//   cheng_u           [W(lambda) - m Qhat]/[m(1-lambda) - m Qhat], clamped and
//                     averaged over a lambda grid, with Qhat built from the
//                     same d strongest signals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pi0kit/epv.hpp"
#include "pi0kit/errors.hpp"
#include "pi0kit/rng.hpp"
#include "pi0kit/testing.hpp"

namespace pi0kit {

enum class InitialEstimator { storey_bootstrap, external_value, previous_e };
enum class Method { storey_bootstrap, e1, e3, u };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::storey_bootstrap: return "storey_bootstrap";
    case Method::e1: return "E1";
    case Method::e3: return "E3";
    case Method::u: return "U";
  }
  return "unknown";
}

inline std::vector<double> default_storey_grid() {
  std::vector<double> grid;
  for (int k = 0; k < 20; ++k) grid.push_back(0.05 * k);
  return grid;
}

inline std::vector<double> default_cheng_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 6; ++k) grid.push_back(0.20 + 0.05 * k);
  return grid;
}

struct EstimatorConfig {
  std::vector<double> storey_lambda_grid = default_storey_grid();
  std::vector<double> cheng_lambda_grid = default_cheng_grid();
  int bootstrap_reps = 100;
  InitialEstimator initial_estimator = InitialEstimator::storey_bootstrap;
  double external_pi0 = std::numeric_limits<double>::quiet_NaN();
  bool clamp = true;  // final outputs are always clamped to [0,1]
  std::uint64_t seed = 0;
  std::vector<Method> methods = {Method::storey_bootstrap, Method::e1, Method::e3, Method::u};
  EpvOptions epv{};

  void validate() const {
    const auto check_grid = [](const std::vector<double>& grid, const char* name) {
      if (grid.empty()) throw config_error(std::string(name) + " grid is empty");
      double prev = -1.0;
      for (const double v : grid) {
        if (!(v >= 0.0 && v < 1.0)) throw config_error(std::string(name) + " grid out of [0,1)");
        if (!(v > prev)) throw config_error(std::string(name) + " grid not strictly increasing");
        prev = v;
      }
    };
    check_grid(storey_lambda_grid, "storey lambda");
    check_grid(cheng_lambda_grid, "cheng lambda");
    if (bootstrap_reps < 1) throw config_error("bootstrap_reps must be >= 1");
    if (!clamp) throw config_error("final estimates are always clamped; clamp=false unsupported");
    if (initial_estimator == InitialEstimator::external_value &&
        !(external_pi0 >= 0.0 && external_pi0 <= 1.0))
      throw config_error("external initial estimate must lie in [0,1]");
    if (methods.empty()) throw config_error("no methods configured");
  }
};

// Per-lambda audit row; mse is NaN where not applicable.
struct LambdaDetail {
  double lambda = 0.0;
  double estimate = 0.0;
  double mse = std::numeric_limits<double>::quiet_NaN();
  bool skipped = false;
};

struct Pi0Estimate {
  double value = 1.0;
  std::string method;
  std::map<std::string, double> intermediates;
  std::vector<LambdaDetail> lambda_details;
  std::vector<std::string> warnings;
};

namespace detail {

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Mean computed over a sorted copy so that the result is invariant to the
// order hypotheses arrive in.
inline double order_free_mean(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  long double sum = 0.0L;
  for (const double v : sorted) sum += v;
  return static_cast<double>(sum / sorted.size());
}

constexpr std::uint64_t kStoreyStreamTag = 0x53544f52u;  // "STOR"

}  // namespace detail

// d = floor(m (1 - pi0_initial)), the working count of alternative-like
// hypotheses. A hair of slack guards binary rounding of the product.
inline std::size_t alternative_count(std::size_t m, double pi0_initial) {
  if (!(pi0_initial >= 0.0 && pi0_initial <= 1.0))
    throw std::invalid_argument("initial pi0 must lie in [0,1]");
  const double v = static_cast<double>(m) * (1.0 - pi0_initial);
  const auto d = static_cast<std::size_t>(std::floor(v + 1e-9));
  return std::min(d, m);
}

inline double storey_at_lambda(std::span<const double> p_values, double lambda) {
  if (p_values.empty()) throw std::invalid_argument("storey_at_lambda: empty p-value list");
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::invalid_argument("storey_at_lambda: lambda must lie in [0,1)");
  std::size_t count = 0;
  for (const double p : p_values) count += (p >= lambda);
  return static_cast<double>(count) /
         (static_cast<double>(p_values.size()) * (1.0 - lambda));
}

// Storey's bootstrap selection: MSE(lambda) is estimated against the plug-in
// min over the grid, resampling the p-values with replacement.
inline Pi0Estimate storey_bootstrap(std::span<const double> p_values,
                                    const EstimatorConfig& config) {
  config.validate();
  if (p_values.size() < 2) throw std::invalid_argument("storey_bootstrap needs m >= 2");
  const auto& grid = config.storey_lambda_grid;
  const std::size_t m = p_values.size();
  const std::size_t g = grid.size();

  std::vector<double> pi_at_lambda(g);
  for (std::size_t j = 0; j < g; ++j) pi_at_lambda[j] = storey_at_lambda(p_values, grid[j]);
  const double pi_min = *std::min_element(pi_at_lambda.begin(), pi_at_lambda.end());

  // Resampling runs against the sorted p-values so the result depends only on
  // their multiset, never on hypothesis order.
  std::vector<double> sorted(p_values.begin(), p_values.end());
  std::sort(sorted.begin(), sorted.end());

  // bin(p) = number of grid points <= p; W_b(lambda_j) = #draws in bins > j.
  std::vector<std::size_t> bin(m);
  for (std::size_t i = 0; i < m; ++i) {
    bin[i] = std::upper_bound(grid.begin(), grid.end(), sorted[i]) - grid.begin();
  }

  std::vector<long double> mse(g, 0.0L);
  std::vector<std::size_t> hist(g + 1);
  const int reps = config.bootstrap_reps;
  for (int b = 0; b < reps; ++b) {
    CounterRng rng(config.seed, stream_id({detail::kStoreyStreamTag, static_cast<std::uint64_t>(b)}));
    std::fill(hist.begin(), hist.end(), 0);
    for (std::size_t i = 0; i < m; ++i) ++hist[bin[rng.uniform_below(m)]];
    std::size_t tail = 0;
    for (std::size_t j = g; j-- > 0;) {
      tail += hist[j + 1];  // tail = #draws with p >= grid[j]
      const double pi_b =
          static_cast<double>(tail) / (static_cast<double>(m) * (1.0 - grid[j]));
      const double dev = pi_b - pi_min;
      mse[j] += static_cast<long double>(dev) * dev;
    }
  }

  std::size_t best = 0;
  for (std::size_t j = 1; j < g; ++j) {
    if (mse[j] < mse[best]) best = j;  // ties stay with the smaller lambda
  }

  Pi0Estimate out;
  out.method = "storey_bootstrap";
  out.value = detail::clamp01(pi_at_lambda[best]);
  out.intermediates["lambda_best"] = grid[best];
  out.intermediates["pi0_min"] = pi_min;
  out.intermediates["pi0_at_lambda_best"] = pi_at_lambda[best];
  out.lambda_details.reserve(g);
  for (std::size_t j = 0; j < g; ++j) {
    out.lambda_details.push_back(
        {grid[j], pi_at_lambda[j], static_cast<double>(mse[j] / reps), false});
  }
  return out;
}

struct EHat {
  double value = 0.0;
  std::size_t d = 0;
};

// Mean of the d smallest per-hypothesis expected p-values,
// d = floor(m (1 - pi0_initial)); d = 0 yields e_hat = 0 by convention.
inline EHat e_hat(const std::vector<EpvRecord>& records, double pi0_initial) {
  if (records.empty()) throw std::invalid_argument("e_hat: empty record list");
  const std::size_t m = records.size();
  const std::size_t d = alternative_count(m, pi0_initial);
  if (d == 0) return {0.0, 0};
  std::vector<double> values(m);
  for (std::size_t i = 0; i < m; ++i) values[i] = records[i].e_hat;
  std::nth_element(values.begin(), values.begin() + (d - 1), values.end());
  std::sort(values.begin(), values.begin() + d);
  long double sum = 0.0L;
  for (std::size_t i = 0; i < d; ++i) sum += values[i];
  return {static_cast<double>(sum / d), d};
}

// The proposed estimator: (p_bar - e_hat) / (0.5 - e_hat), clamped to [0,1].
inline Pi0Estimate proposed_e(std::span<const double> p_values,
                              const std::vector<EpvRecord>& epv_records, double pi0_initial,
                              const EstimatorConfig& config) {
  config.validate();
  if (p_values.empty()) throw std::invalid_argument("proposed_e: empty p-value list");
  if (p_values.size() != epv_records.size())
    throw std::invalid_argument("proposed_e: p-values and epv records must align");

  const double p_bar = detail::order_free_mean(p_values);
  const auto [ehat, d] = e_hat(epv_records, pi0_initial);

  Pi0Estimate out;
  out.method = "proposed_e";
  out.intermediates["p_bar"] = p_bar;
  out.intermediates["e_hat"] = ehat;
  out.intermediates["d"] = static_cast<double>(d);
  out.intermediates["pi0_initial"] = pi0_initial;
  if (d == 0) out.warnings.push_back("d = 0: no bias correction applied");

  if (ehat >= 0.5 - 1e-12) {
    if (p_bar >= 0.5) {
      out.value = 1.0;
      out.intermediates["raw"] = 1.0;
      out.warnings.push_back("degenerate denominator (e_hat at 0.5); reporting 1.0");
      return out;
    }
    throw degenerate_denominator_error("proposed_e: e_hat reached 0.5 with p_bar < 0.5");
  }
  const double raw = (p_bar - ehat) / (0.5 - ehat);
  out.intermediates["raw"] = raw;
  out.value = detail::clamp01(raw);
  return out;
}

namespace detail {

inline double initial_pi0_value(std::span<const double> p_values, const EstimatorConfig& config) {
  switch (config.initial_estimator) {
    case InitialEstimator::storey_bootstrap:
      return pi0kit::storey_bootstrap(p_values, config).value;
    case InitialEstimator::external_value:
      return config.external_pi0;
    case InitialEstimator::previous_e:
      throw config_error("previous_e applies only inside proposed_e_iterated stages");
  }
  throw config_error("unknown initial estimator");
}

}  // namespace detail

// One-step iteration: run proposed_e with the configured initial estimator,
// then once more with the first result as the initial value.
inline Pi0Estimate proposed_e_iterated(std::span<const double> p_values,
                                       const std::vector<EpvRecord>& epv_records,
                                       const EstimatorConfig& config,
                                       std::optional<double> initial_override = std::nullopt) {
  config.validate();
  const double initial =
      initial_override ? *initial_override : detail::initial_pi0_value(p_values, config);
  const Pi0Estimate stage1 = proposed_e(p_values, epv_records, initial, config);
  const Pi0Estimate stage2 = proposed_e(p_values, epv_records, stage1.value, config);

  Pi0Estimate out;
  out.method = "proposed_e_iterated";
  out.value = stage2.value;
  out.intermediates["pi0_initial"] = initial;
  for (const auto& [k, v] : stage1.intermediates) out.intermediates["stage1_" + k] = v;
  for (const auto& [k, v] : stage2.intermediates) out.intermediates["stage2_" + k] = v;
  out.warnings = stage1.warnings;
  out.warnings.insert(out.warnings.end(), stage2.warnings.begin(), stage2.warnings.end());
  return out;
}

// Cheng's bias-and-variance-reduced estimator. Qhat(lambda) sums
// Q_{delta-hat}(lambda) over the d strongest signals (smallest expected
// p-value, ties to larger |delta-hat| then lower index) and enters the
// formula as the m-denominated average.
inline Pi0Estimate cheng_u(std::span<const double> p_values,
                           const std::vector<TestOutcome>& outcomes, double pi0_initial,
                           const EstimatorConfig& config) {
  config.validate();
  if (p_values.empty()) throw std::invalid_argument("cheng_u: empty p-value list");
  if (p_values.size() != outcomes.size())
    throw std::invalid_argument("cheng_u: p-values and outcomes must align");
  if (outcomes.front().family == TestFamily::z_one_sided)
    throw config_error("cheng_u requires a two-sided t family (Q is quantile-based)");

  const std::size_t m = p_values.size();
  const auto records = epv_for_outcomes(outcomes, config.epv);
  const std::size_t d = alternative_count(m, pi0_initial);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].e_hat != records[b].e_hat) return records[a].e_hat < records[b].e_hat;
    const double da = std::fabs(outcomes[a].effect_size_hat);
    const double db = std::fabs(outcomes[b].effect_size_hat);
    if (da != db) return da > db;
    return a < b;
  });

  const double df = outcomes.front().df;
  const double scale = outcomes.front().ncp_scale;

  Pi0Estimate out;
  out.method = "cheng_u";
  out.intermediates["d"] = static_cast<double>(d);
  out.intermediates["pi0_initial"] = pi0_initial;

  long double acc = 0.0L;
  std::size_t kept = 0;
  for (const double lambda : config.cheng_lambda_grid) {
    std::size_t w = 0;
    for (const double p : p_values) w += (p >= lambda);
    long double qsum = 0.0L;
    for (std::size_t k = 0; k < d; ++k) {
      qsum += q_delta(lambda, outcomes[order[k]].effect_size_hat, df, scale, config.epv);
    }
    const double m_qhat = static_cast<double>(qsum);  // m * Qhat(lambda)
    const double denom = static_cast<double>(m) * (1.0 - lambda) - m_qhat;
    LambdaDetail detail{lambda, 0.0, std::numeric_limits<double>::quiet_NaN(), false};
    if (denom <= 1e-9) {
      detail.skipped = true;
      out.warnings.push_back("lambda " + std::to_string(lambda) +
                             " skipped: degenerate denominator");
    } else {
      const double raw = (static_cast<double>(w) - m_qhat) / denom;
      detail.estimate = detail::clamp01(raw);
      acc += detail.estimate;
      ++kept;
    }
    out.lambda_details.push_back(detail);
  }
  if (kept == 0)
    throw degenerate_denominator_error("cheng_u: every lambda grid point was degenerate");
  out.value = static_cast<double>(acc / kept);
  return out;
}

struct EstimateSet {
  std::map<std::string, Pi0Estimate> estimates;
  std::map<std::string, std::string> errors;
};

// Runs every configured method; per-method failures are collected, not fatal.
inline EstimateSet estimate_all(std::span<const double> p_values,
                                const std::vector<TestOutcome>& outcomes,
                                const EstimatorConfig& config) {
  config.validate();
  EstimateSet set;

  std::optional<Pi0Estimate> storey;
  std::optional<double> initial;
  std::optional<std::string> initial_error;
  try {
    if (config.initial_estimator == InitialEstimator::storey_bootstrap) {
      storey = storey_bootstrap(p_values, config);
      initial = storey->value;
    } else {
      initial = detail::initial_pi0_value(p_values, config);
    }
  } catch (const std::exception& ex) {
    initial_error = ex.what();
  }

  std::optional<std::vector<EpvRecord>> records;
  const auto ensure_records = [&]() -> const std::vector<EpvRecord>& {
    if (!records) records = epv_for_outcomes(outcomes, config.epv);
    return *records;
  };

  for (const Method method : config.methods) {
    const std::string name = method_name(method);
    try {
      switch (method) {
        case Method::storey_bootstrap: {
          if (!storey) storey = storey_bootstrap(p_values, config);
          Pi0Estimate est = *storey;
          est.method = name;
          set.estimates[name] = std::move(est);
          break;
        }
        case Method::e1: {
          if (!initial) throw config_error("initial estimate unavailable: " + *initial_error);
          Pi0Estimate est = proposed_e(p_values, ensure_records(), *initial, config);
          est.method = name;
          set.estimates[name] = std::move(est);
          break;
        }
        case Method::e3: {
          if (!initial) throw config_error("initial estimate unavailable: " + *initial_error);
          Pi0Estimate est = proposed_e_iterated(p_values, ensure_records(), config, *initial);
          est.method = name;
          set.estimates[name] = std::move(est);
          break;
        }
        case Method::u: {
          if (!initial) throw config_error("initial estimate unavailable: " + *initial_error);
          Pi0Estimate est = cheng_u(p_values, outcomes, *initial, config);
          est.method = name;
          set.estimates[name] = std::move(est);
          break;
        }
      }
    } catch (const std::exception& ex) {
      set.errors[name] = ex.what();
    }
  }
  return set;
}

}  // namespace pi0kit
