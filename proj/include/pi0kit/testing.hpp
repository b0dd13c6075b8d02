#pragma once

// Per-hypothesis test statistics, p-values, and effect-size estimates for the
// three supported families: one-sided Z, one-sample two-sided t, and
// two-sample two-sided t (pooled variance).

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pi0kit/distributions.hpp"
#include "pi0kit/errors.hpp"

namespace pi0kit {

enum class TestFamily { z_one_sided, t_one_sample_two_sided, t_two_sample_two_sided };

inline const char* to_string(TestFamily family) {
  switch (family) {
    case TestFamily::z_one_sided: return "z_one_sided";
    case TestFamily::t_one_sample_two_sided: return "t_one_sample_two_sided";
    case TestFamily::t_two_sample_two_sided: return "t_two_sample_two_sided";
  }
  return "unknown";
}

// One row of a data matrix. group_labels (0/1 per column) are required only
// for the two-sample family.
struct Sample {
  std::vector<double> values;
  std::vector<int> group_labels;
};

struct TestOutcome {
  double p_value = 1.0;
  double effect_size_hat = 0.0;   // delta-hat, on the sigma scale
  TestFamily family = TestFamily::t_one_sample_two_sided;
  double df = 1.0;                // +inf for the Z family
  double ncp_scale = 1.0;         // sqrt(n) or sqrt(n1 n2 / (n1 + n2))
  double statistic = 0.0;         // realized Z or T
};

// Dense row-major matrix, rows = hypotheses, columns = observations.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t rows_, std::size_t cols_)
      : rows(rows_), cols(cols_), values(rows_ * cols_, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
};

namespace detail {

inline void check_finite(std::span<const double> values) {
  for (const double v : values) {
    if (!std::isfinite(v)) throw degenerate_sample_error("sample contains non-finite values");
  }
}

struct MeanVar {
  double mean;
  double ss;  // sum of squared deviations
  std::size_t n;
};

inline MeanVar mean_and_ss(std::span<const double> values) {
  long double sum = 0.0L;
  for (const double v : values) sum += v;
  const double mean = static_cast<double>(sum / values.size());
  long double ss = 0.0L;
  for (const double v : values) {
    const long double d = v - mean;
    ss += d * d;
  }
  return {mean, static_cast<double>(ss), values.size()};
}

}  // namespace detail

// One-sided Z-test of mean 0 against mean > 0 with known sigma.
// p = 1 - Phi(sqrt(n) xbar / sigma); delta-hat clamps at 0.
inline TestOutcome z_test(const Sample& sample, double sigma) {
  if (sample.values.empty()) throw degenerate_sample_error("z test needs at least one value");
  if (!(sigma > 0.0)) throw std::invalid_argument("z test requires sigma > 0");
  detail::check_finite(sample.values);
  const auto mv = detail::mean_and_ss(sample.values);
  const double scale = std::sqrt(static_cast<double>(mv.n));
  const double z = scale * mv.mean / sigma;
  TestOutcome out;
  out.family = TestFamily::z_one_sided;
  out.p_value = 1.0 - normal_cdf(z);
  out.effect_size_hat = std::max(0.0, mv.mean / sigma);
  out.df = std::numeric_limits<double>::infinity();
  out.ncp_scale = scale;
  out.statistic = z;
  return out;
}

// Two-sided one-sample t-test of mean 0. T = sqrt(n) xbar / S, df = n-1,
// p = 2 (1 - F_t(|T|)). The effect estimate is xbar/S so that
// ncp_scale * effect_size_hat reproduces T exactly.
inline TestOutcome t_test_one_sample(const Sample& sample) {
  const std::size_t n = sample.values.size();
  if (n < 2) throw degenerate_sample_error("one-sample t test needs n >= 2");
  detail::check_finite(sample.values);
  const auto mv = detail::mean_and_ss(sample.values);
  const double s2 = mv.ss / (n - 1);
  if (!(s2 > 0.0)) throw zero_variance_error("one-sample t test: all values identical");
  TestOutcome out;
  out.family = TestFamily::t_one_sample_two_sided;
  out.df = static_cast<double>(n - 1);
  out.ncp_scale = std::sqrt(static_cast<double>(n));
  out.effect_size_hat = mv.mean / std::sqrt(s2);
  out.statistic = out.ncp_scale * out.effect_size_hat;
  out.p_value = 2.0 * (1.0 - t_cdf(std::fabs(out.statistic), TDist(out.df)));
  return out;
}

// Two-sided two-sample t-test with pooled variance. df = n1+n2-2,
// ncp scale sqrt(n1 n2/(n1+n2)); effect estimate (xbar-ybar)/S.
inline TestOutcome t_test_two_sample(const Sample& sample) {
  if (sample.group_labels.size() != sample.values.size())
    throw std::invalid_argument("two-sample t test needs one group label per value");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < sample.values.size(); ++i) {
    (sample.group_labels[i] == 0 ? x : y).push_back(sample.values[i]);
  }
  if (x.size() < 2 || y.size() < 2)
    throw degenerate_sample_error("two-sample t test needs both groups of size >= 2");
  detail::check_finite(sample.values);
  const auto mx = detail::mean_and_ss(x);
  const auto my = detail::mean_and_ss(y);
  const std::size_t n1 = x.size(), n2 = y.size();
  const double df = static_cast<double>(n1 + n2 - 2);
  const double pooled_s2 = (mx.ss + my.ss) / df;
  if (!(pooled_s2 > 0.0)) throw zero_variance_error("two-sample t test: pooled variance is zero");
  TestOutcome out;
  out.family = TestFamily::t_two_sample_two_sided;
  out.df = df;
  out.ncp_scale = std::sqrt(static_cast<double>(n1) * static_cast<double>(n2) /
                            static_cast<double>(n1 + n2));
  out.effect_size_hat = (mx.mean - my.mean) / std::sqrt(pooled_s2);
  out.statistic = out.ncp_scale * out.effect_size_hat;
  out.p_value = 2.0 * (1.0 - t_cdf(std::fabs(out.statistic), TDist(out.df)));
  return out;
}

// Applies one family row-wise. Row failures are collected and reported
// together with their row indices.
inline std::vector<TestOutcome> test_matrix(const Matrix& data, TestFamily family,
                                            const std::vector<int>& group_labels = {},
                                            std::optional<double> sigma = std::nullopt) {
  std::vector<TestOutcome> outcomes;
  outcomes.reserve(data.rows);
  std::vector<std::pair<std::size_t, std::string>> failures;
  for (std::size_t i = 0; i < data.rows; ++i) {
    Sample sample;
    const auto row = data.row(i);
    sample.values.assign(row.begin(), row.end());
    if (family == TestFamily::t_two_sample_two_sided) sample.group_labels = group_labels;
    try {
      switch (family) {
        case TestFamily::z_one_sided:
          if (!sigma) throw std::invalid_argument("z family requires sigma");
          outcomes.push_back(z_test(sample, *sigma));
          break;
        case TestFamily::t_one_sample_two_sided:
          outcomes.push_back(t_test_one_sample(sample));
          break;
        case TestFamily::t_two_sample_two_sided:
          outcomes.push_back(t_test_two_sample(sample));
          break;
      }
    } catch (const std::exception& ex) {
      failures.emplace_back(i, ex.what());
    }
  }
  if (!failures.empty()) {
    std::ostringstream msg;
    msg << failures.size() << " row(s) failed:";
    for (const auto& [row, what] : failures) msg << " [row " << row << "] " << what << ";";
    throw degenerate_sample_error(msg.str());
  }
  return outcomes;
}

}  // namespace pi0kit
