#pragma once

// Simulation study: generate block-correlated Gaussian data matrices, run the
// one-sample two-sided t pipeline plus every configured estimator over N
// replications, and aggregate bias, MSE and kurtosis per (pi0, n, rho,
// method) cell.
//
// Reproducibility: every (cell, replication) unit draws from its own
// counter-based stream keyed by (pi0, n, rho, replication), and results land
// in preallocated slots reduced in a fixed order, so summaries are
// bit-identical across runs and across thread counts.

#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pi0kit/epv.hpp"
#include "pi0kit/errors.hpp"
#include "pi0kit/estimators.hpp"
#include "pi0kit/rng.hpp"
#include "pi0kit/testing.hpp"

namespace pi0kit {

enum class VarianceReading { rate, mean };

struct SimulationConfig {
  int m = 1000;
  int n = 25;
  std::vector<double> pi0_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int b = 100;  // block size
  int r = 10;   // block count
  double rho = 0.0;
  int replications = 1000;
  std::uint64_t seed = 0;
  double mu0 = 0.0;
  double effect_range = 0.5;
  // Block variances are exponential(variance_exp_param)/variance_divisor;
  // the parameter reads as a rate by default (mean 1/10), switchable to a
  // mean because the source is ambiguous.
  double variance_exp_param = 10.0;
  VarianceReading variance_reading = VarianceReading::rate;
  double variance_divisor = 3.0;
  bool collect_oracle = false;
  bool collect_raw = false;
  int threads = 0;  // 0: PI0KIT_THREADS env var, else hardware concurrency
  EstimatorConfig estimator{};

  void validate() const {
    if (m < 1 || b < 1 || r < 1) throw config_error("m, b, r must be positive");
    if (m != b * r) throw config_error("m must equal b * r");
    if (n < 2) throw config_error("n must be >= 2 for the t pipeline");
    if (!(rho >= 0.0 && rho < 1.0)) throw config_error("rho must lie in [0,1)");
    if (replications < 1) throw config_error("replications must be >= 1");
    if (pi0_grid.empty()) throw config_error("pi0 grid is empty");
    for (const double pi0 : pi0_grid) {
      if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw config_error("pi0 grid out of [0,1]");
    }
    if (!(effect_range > 0.0)) throw config_error("effect_range must be positive");
    if (!(variance_exp_param > 0.0) || !(variance_divisor > 0.0))
      throw config_error("variance parameters must be positive");
    estimator.validate();
  }
};

// Block-diagonal covariance: r blocks, block k is sigma2[k] * AR(1)(rho) of
// size b x b. Never materialized densely.
struct BlockCovariance {
  int block_size = 0;
  double rho = 0.0;
  std::vector<double> sigma2;
};

struct TruthAssignment {
  std::vector<char> is_null;        // size m
  std::vector<double> mu;           // exact 0 on the null set
  std::vector<double> sigma2_block; // per-block variances
  std::size_t m0 = 0;
  std::size_t m1 = 0;
};

namespace detail {

inline std::size_t floor_count(std::size_t m, double fraction) {
  const double v = static_cast<double>(m) * fraction;
  const auto k = static_cast<std::size_t>(std::floor(v + 1e-9));
  return std::min(k, m);
}

inline std::uint64_t dbits64(double v) {
  std::uint64_t out;
  __builtin_memcpy(&out, &v, sizeof(v));
  return out;
}

constexpr std::uint64_t kDataStreamTag = 0x44415441u;  // "DATA"
constexpr std::uint64_t kSeedDeriveTag = 0x45535444u;  // "ESTD"

}  // namespace detail

inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PI0KIT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

inline BlockCovariance build_covariance(const SimulationConfig& config, CounterRng& rng) {
  config.validate();
  BlockCovariance cov;
  cov.block_size = config.b;
  cov.rho = config.rho;
  cov.sigma2.resize(config.r);
  const double rate = config.variance_reading == VarianceReading::rate
                          ? config.variance_exp_param
                          : 1.0 / config.variance_exp_param;
  for (auto& s2 : cov.sigma2) s2 = rng.exponential(rate) / config.variance_divisor;
  return cov;
}

// Draws the truth assignment and an m x n matrix whose columns are i.i.d.
// N(mu, Sigma) vectors; rows within a block follow the AR(1) recursion
// x_t = rho x_{t-1} + sqrt(1-rho^2) z_t scaled by the block sigma.
inline std::pair<Matrix, TruthAssignment> generate_dataset(const SimulationConfig& config,
                                                           double pi0, CounterRng& rng) {
  config.validate();
  if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw config_error("pi0 must lie in [0,1]");
  const auto m = static_cast<std::size_t>(config.m);

  TruthAssignment truth;
  truth.m0 = detail::floor_count(m, pi0);
  truth.m1 = m - truth.m0;
  truth.is_null.assign(m, 0);
  truth.mu.assign(m, config.mu0);

  // Partial Fisher-Yates for the null index set.
  std::vector<std::uint32_t> indices(m);
  for (std::size_t i = 0; i < m; ++i) indices[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < truth.m0; ++i) {
    const std::size_t j = i + rng.uniform_below(m - i);
    std::swap(indices[i], indices[j]);
    truth.is_null[indices[i]] = 1;
  }

  // Alternative means: half from (0, effect_range), half from the mirror;
  // an odd count leaves the extra one positive.
  const std::size_t positives = (truth.m1 + 1) / 2;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (truth.is_null[i]) continue;
    const double magnitude = config.effect_range * rng.uniform01();
    truth.mu[i] = (seen < positives) ? magnitude : -magnitude;
    ++seen;
  }

  const BlockCovariance cov = build_covariance(config, rng);
  truth.sigma2_block = cov.sigma2;

  Matrix data(m, static_cast<std::size_t>(config.n));
  const double rho = config.rho;
  const double innovation = std::sqrt(1.0 - rho * rho);
  for (std::size_t col = 0; col < data.cols; ++col) {
    for (int block = 0; block < config.r; ++block) {
      const double sigma = std::sqrt(cov.sigma2[block]);
      const std::size_t base = static_cast<std::size_t>(block) * config.b;
      double x = rng.normal();
      data.at(base, col) = truth.mu[base] + sigma * x;
      for (int t = 1; t < config.b; ++t) {
        x = rho * x + innovation * rng.normal();
        data.at(base + t, col) = truth.mu[base + t] + sigma * x;
      }
    }
  }
  return {std::move(data), std::move(truth)};
}

// Figure-1 quantities: e averages e_{delta_i} over the true alternatives with
// the true effects; e_tilde averages the plug-in e_{delta-hat_i} over the
// same set. Both are NaN when the truth has no alternatives.
inline std::pair<double, double> oracle_e_quantities(const SimulationConfig& config,
                                                     const TruthAssignment& truth,
                                                     const std::vector<EpvRecord>& epv_records) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (truth.m1 == 0) return {nan, nan};
  const double df = static_cast<double>(config.n - 1);
  const double scale = std::sqrt(static_cast<double>(config.n));
  long double e_sum = 0.0L, e_tilde_sum = 0.0L;
  for (std::size_t i = 0; i < truth.mu.size(); ++i) {
    if (truth.is_null[i]) continue;
    const double sigma = std::sqrt(truth.sigma2_block[i / config.b]);
    e_sum += e_delta_t(truth.mu[i] / sigma, df, scale, config.estimator.epv);
    e_tilde_sum += epv_records[i].e_hat;
  }
  return {static_cast<double>(e_sum / truth.m1), static_cast<double>(e_tilde_sum / truth.m1)};
}

struct CellSummary {
  double pi0 = 0.0;
  int n = 0;
  double rho = 0.0;
  std::string method;
  double bias = 0.0;
  double mse = 0.0;
  double kurtosis = std::numeric_limits<double>::quiet_NaN();
  int replications = 0;
  // Oracle columns (NaN unless collected).
  double mean_e = std::numeric_limits<double>::quiet_NaN();
  double mean_e_tilde = std::numeric_limits<double>::quiet_NaN();
  double mean_e_hat = std::numeric_limits<double>::quiet_NaN();
};

struct RawRecord {
  double pi0 = 0.0;
  int n = 0;
  double rho = 0.0;
  int replication = 0;
  std::string method;
  double estimate = 0.0;
};

struct OracleRecord {
  double pi0 = 0.0;
  int n = 0;
  double rho = 0.0;
  int replication = 0;
  double e = std::numeric_limits<double>::quiet_NaN();
  double e_tilde = std::numeric_limits<double>::quiet_NaN();
  double e_hat = std::numeric_limits<double>::quiet_NaN();
  // Mean of the m1 smallest per-hypothesis expected p-values: the middle
  // term of the chain e_hat <= e_mid <= e_tilde that holds whenever d <= m1.
  double e_mid = std::numeric_limits<double>::quiet_NaN();
  std::size_t d = 0;
  std::size_t m1 = 0;
};

struct SimSummary {
  SimulationConfig config;
  std::vector<CellSummary> cells;
  std::vector<RawRecord> raw;
  std::vector<OracleRecord> oracle;
};

namespace detail {

struct ReplicationResult {
  std::vector<double> estimates;  // per configured method
  OracleRecord oracle;
  std::string error;
};

inline void run_replication(const SimulationConfig& config, double pi0, int rep,
                            ReplicationResult& slot) {
  try {
    CounterRng rng(config.seed,
                   stream_id({kDataStreamTag, dbits64(pi0), static_cast<std::uint64_t>(config.n),
                              dbits64(config.rho), static_cast<std::uint64_t>(rep)}));
    auto [data, truth] = generate_dataset(config, pi0, rng);
    const auto outcomes = test_matrix(data, TestFamily::t_one_sample_two_sided);
    std::vector<double> p(outcomes.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) p[i] = outcomes[i].p_value;

    EstimatorConfig est_config = config.estimator;
    est_config.seed = stream_id({kSeedDeriveTag, config.seed, dbits64(pi0),
                                 static_cast<std::uint64_t>(config.n), dbits64(config.rho),
                                 static_cast<std::uint64_t>(rep)});
    const auto set = estimate_all(p, outcomes, est_config);
    if (!set.errors.empty()) {
      std::string msg = "estimation failed:";
      for (const auto& [name, what] : set.errors) msg += " [" + name + "] " + what;
      slot.error = msg;
      return;
    }
    slot.estimates.reserve(est_config.methods.size());
    for (const Method method : est_config.methods) {
      slot.estimates.push_back(set.estimates.at(method_name(method)).value);
    }

    if (config.collect_oracle) {
      const auto records = epv_for_outcomes(outcomes, config.estimator.epv);
      const auto [e, e_tilde] = oracle_e_quantities(config, truth, records);
      slot.oracle.pi0 = pi0;
      slot.oracle.n = config.n;
      slot.oracle.rho = config.rho;
      slot.oracle.replication = rep;
      slot.oracle.e = e;
      slot.oracle.e_tilde = e_tilde;
      slot.oracle.m1 = truth.m1;
      if (truth.m1 > 0) {
        slot.oracle.e_mid =
            e_hat(records, 1.0 - static_cast<double>(truth.m1) / truth.mu.size()).value;
      }
      // e_hat and d come from the proposed estimator when it ran, otherwise
      // from a direct evaluation with the configured initial estimator.
      if (set.estimates.count("E1")) {
        const auto& inter = set.estimates.at("E1").intermediates;
        slot.oracle.e_hat = inter.at("e_hat");
        slot.oracle.d = static_cast<std::size_t>(inter.at("d"));
      } else {
        const double initial = storey_bootstrap(p, est_config).value;
        const auto eh = e_hat(records, initial);
        slot.oracle.e_hat = eh.value;
        slot.oracle.d = eh.d;
      }
    }
  } catch (const std::exception& ex) {
    slot.error = ex.what();
  }
}

inline double format_safe_kurtosis(const std::vector<double>& estimates, double mean) {
  long double m2 = 0.0L, m4 = 0.0L;
  for (const double v : estimates) {
    const long double d = v - mean;
    const long double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= estimates.size();
  m4 /= estimates.size();
  if (m2 < 1e-300) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(m4 / (m2 * m2));
}

}  // namespace detail

// Runs the full grid of pi0 cells for the configured (n, rho) pair.
inline SimSummary run_study(const SimulationConfig& config) {
  config.validate();
  const std::size_t cells = config.pi0_grid.size();
  const std::size_t reps = static_cast<std::size_t>(config.replications);
  std::vector<std::vector<detail::ReplicationResult>> results(cells);
  for (auto& cell : results) cell.resize(reps);

  std::atomic<std::size_t> next{0};
  const std::size_t total = cells * reps;
  const int thread_count =
      static_cast<int>(std::min<std::size_t>(effective_threads(config.threads), total));
  const auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      const std::size_t cell = task / reps;
      const int rep = static_cast<int>(task % reps);
      detail::run_replication(config, config.pi0_grid[cell], rep, results[cell][rep]);
    }
  };
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SimSummary summary;
  summary.config = config;
  const auto& methods = config.estimator.methods;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double pi0 = config.pi0_grid[cell];
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const auto& slot = results[cell][rep];
      if (!slot.error.empty()) {
        throw error("simulation cell (pi0=" + std::to_string(pi0) +
                    ", n=" + std::to_string(config.n) + ", rho=" + std::to_string(config.rho) +
                    ", rep=" + std::to_string(rep) + "): " + slot.error);
      }
    }

    long double oracle_e = 0.0L, oracle_et = 0.0L, oracle_eh = 0.0L;
    std::size_t oracle_count = 0;
    if (config.collect_oracle) {
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto& rec = results[cell][rep].oracle;
        summary.oracle.push_back(rec);
        if (!std::isnan(rec.e)) {
          oracle_e += rec.e;
          oracle_et += rec.e_tilde;
          oracle_eh += rec.e_hat;
          ++oracle_count;
        }
      }
    }

    for (std::size_t k = 0; k < methods.size(); ++k) {
      std::vector<double> estimates(reps);
      for (std::size_t rep = 0; rep < reps; ++rep) {
        estimates[rep] = results[cell][rep].estimates[k];
        if (config.collect_raw) {
          summary.raw.push_back({pi0, config.n, config.rho, static_cast<int>(rep),
                                 method_name(methods[k]), estimates[rep]});
        }
      }
      long double bias_acc = 0.0L, mse_acc = 0.0L, mean_acc = 0.0L;
      for (const double v : estimates) {
        const long double dev = v - pi0;
        bias_acc += dev;
        mse_acc += dev * dev;
        mean_acc += v;
      }
      CellSummary row;
      row.pi0 = pi0;
      row.n = config.n;
      row.rho = config.rho;
      row.method = method_name(methods[k]);
      row.bias = static_cast<double>(bias_acc / reps);
      row.mse = static_cast<double>(mse_acc / reps);
      row.kurtosis =
          detail::format_safe_kurtosis(estimates, static_cast<double>(mean_acc / reps));
      row.replications = static_cast<int>(reps);
      if (config.collect_oracle && oracle_count > 0) {
        row.mean_e = static_cast<double>(oracle_e / oracle_count);
        row.mean_e_tilde = static_cast<double>(oracle_et / oracle_count);
        row.mean_e_hat = static_cast<double>(oracle_eh / oracle_count);
      }
      summary.cells.push_back(std::move(row));
    }
  }
  return summary;
}

inline void merge_into(SimSummary& dst, SimSummary&& src) {
  dst.cells.insert(dst.cells.end(), src.cells.begin(), src.cells.end());
  dst.raw.insert(dst.raw.end(), src.raw.begin(), src.raw.end());
  dst.oracle.insert(dst.oracle.end(), src.oracle.begin(), src.oracle.end());
}

// Shortest round-trip decimal form; deterministic and locale-free.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_summary_csv(const SimSummary& summary, std::ostream& os) {
  const auto& c = summary.config;
  os << "# pi0kit simulation summary\n";
  os << "# m=" << c.m << " b=" << c.b << " r=" << c.r << " replications=" << c.replications
     << " seed=" << c.seed << " bootstrap_reps=" << c.estimator.bootstrap_reps
     << " effect_range=" << format_double(c.effect_range)
     << " variance=exp(" << format_double(c.variance_exp_param)
     << (c.variance_reading == VarianceReading::rate ? " rate" : " mean") << ")/"
     << format_double(c.variance_divisor) << "\n";
  os << "pi0,n,rho,method,bias,mse,kurtosis,replications";
  const bool oracle = c.collect_oracle;
  if (oracle) os << ",e,e_tilde,e_hat";
  os << "\n";
  for (const auto& row : summary.cells) {
    os << format_double(row.pi0) << ',' << row.n << ',' << format_double(row.rho) << ','
       << row.method << ',' << format_double(row.bias) << ',' << format_double(row.mse) << ','
       << format_double(row.kurtosis) << ',' << row.replications;
    if (oracle) {
      os << ',' << format_double(row.mean_e) << ',' << format_double(row.mean_e_tilde) << ','
         << format_double(row.mean_e_hat);
    }
    os << "\n";
  }
}

inline void write_raw_csv(const SimSummary& summary, std::ostream& os) {
  os << "pi0,n,rho,replication,method,estimate\n";
  for (const auto& rec : summary.raw) {
    os << format_double(rec.pi0) << ',' << rec.n << ',' << format_double(rec.rho) << ','
       << rec.replication << ',' << rec.method << ',' << format_double(rec.estimate) << "\n";
  }
}

}  // namespace pi0kit
