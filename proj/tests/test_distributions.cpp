#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pi0kit/distributions.hpp"

using namespace pi0kit;

TEST_CASE("normal_cdf basics") {
  REQUIRE(normal_cdf(0.0) == 0.5);
  REQUIRE(std::fabs(normal_cdf(8.0) - 1.0) < 1e-12);
  // High-precision series oracle, frozen once.
  REQUIRE(std::fabs(normal_cdf(1.96) - 0.9750021048517795) < 1e-12);
  REQUIRE(std::fabs(normal_cdf(1.96) -
                    static_cast<double>(oracles::normal_cdf_series(1.96L))) < 1e-14);
}

TEST_CASE("normal_cdf symmetry and monotonicity") {
  double prev = 0.0;
  for (double x = -6.0; x <= 6.0; x += 0.25) {
    const double v = normal_cdf(x);
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
    REQUIRE(v >= prev);
    REQUIRE(std::fabs(v + normal_cdf(-x) - 1.0) < 1e-15);
    prev = v;
  }
}

TEST_CASE("t_cdf center and Cauchy closed form") {
  REQUIRE(t_cdf(0.0, TDist(7)) == 0.5);
  REQUIRE(std::fabs(t_cdf(1.0, TDist(1)) - 0.75) < 1e-14);
  for (double x = -4.0; x <= 4.0; x += 0.5) {
    const double cauchy = 0.5 + std::atan(x) / 3.14159265358979323846;
    REQUIRE(std::fabs(t_cdf(x, TDist(1)) - cauchy) < 1e-13);
  }
}

TEST_CASE("t_cdf against density-integration oracle") {
  REQUIRE(std::fabs(t_cdf(2.0, TDist(10)) -
                    static_cast<double>(oracles::t_cdf_integral(2.0L, 10.0L))) < 1e-10);
  // Frozen value for the same point.
  REQUIRE(std::fabs(t_cdf(2.0, TDist(10)) - 0.9633059826146297) < 1e-10);
  for (double df : {3.0, 24.0, 71.0}) {
    for (double x : {-2.5, -0.7, 0.3, 1.9}) {
      const double oracle = static_cast<double>(oracles::t_cdf_integral(x, df));
      REQUIRE(std::fabs(t_cdf(x, TDist(df)) - oracle) < 1e-10);
    }
  }
}

TEST_CASE("t_cdf symmetry and range") {
  for (double df : {1.0, 2.0, 5.0, 10.0, 48.0, 100.0}) {
    for (double x = -8.0; x <= 8.0; x += 0.37) {
      const double a = t_cdf(x, TDist(df));
      const double b = t_cdf(-x, TDist(df));
      REQUIRE(a > 0.0);
      REQUIRE(a < 1.0);
      REQUIRE(std::fabs(a + b - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("t_cdf approaches normal for large df") {
  for (double x : {-2.0, -0.5, 1.0, 2.5}) {
    const double gap_1e4 = std::fabs(t_cdf(x, TDist(1e4)) - normal_cdf(x));
    const double gap_1e6 = std::fabs(t_cdf(x, TDist(1e6)) - normal_cdf(x));
    REQUIRE(gap_1e6 < 1e-6);
    REQUIRE(gap_1e6 < gap_1e4);
  }
  REQUIRE(t_cdf(1.3, TDist(std::numeric_limits<double>::infinity())) == normal_cdf(1.3));
}

TEST_CASE("t_quantile_upper basics") {
  REQUIRE(t_quantile_upper(0.5, TDist(3)) == 0.0);
  REQUIRE(std::fabs(t_quantile_upper(0.25, TDist(1)) - 1.0) < 1e-9);
  REQUIRE(std::fabs(t_quantile_upper(0.025, TDist(10)) - 2.2281388519649385) < 1e-8);
  REQUIRE(std::fabs(t_quantile_upper(0.025, TDist(10)) -
                    static_cast<double>(oracles::t_quantile_integral(0.025L, 10.0L))) < 1e-8);
  REQUIRE_THROWS_AS(t_quantile_upper(0.0, TDist(5)), std::domain_error);
  REQUIRE_THROWS_AS(t_quantile_upper(1.0, TDist(5)), std::domain_error);
  REQUIRE_THROWS_AS(t_quantile_upper(-0.2, TDist(5)), std::domain_error);
}

TEST_CASE("t_quantile round-trips through t_cdf") {
  for (double df : {1.0, 2.0, 4.0, 9.0, 24.0, 70.0}) {
    for (double p = 0.001; p < 0.9995; p += 0.037) {
      const double q = t_quantile_upper(p, TDist(df));
      REQUIRE(std::fabs(t_cdf(q, TDist(df)) - (1.0 - p)) <= 1e-9);
    }
  }
}

TEST_CASE("noncentral t reduces to central at ncp 0") {
  REQUIRE(std::fabs(noncentral_t_cdf(0.0, NoncentralTDist(9, 0.0)) - 0.5) < 1e-12);
  for (double df : {2.0, 5.0, 10.0, 48.0, 100.0}) {
    for (double x = -5.0; x <= 5.0; x += 0.5) {
      REQUIRE(std::fabs(noncentral_t_cdf(x, NoncentralTDist(df, 0.0)) -
                        t_cdf(x, TDist(df))) < 1e-9);
    }
  }
}

TEST_CASE("noncentral t is nonincreasing in ncp") {
  REQUIRE(noncentral_t_cdf(1.0, NoncentralTDist(9, 0)) >
          noncentral_t_cdf(1.0, NoncentralTDist(9, 1)));
  REQUIRE(noncentral_t_cdf(1.0, NoncentralTDist(9, 1)) >
          noncentral_t_cdf(1.0, NoncentralTDist(9, 2)));
  for (double x : {-2.0, 0.0, 1.5, 4.0}) {
    for (double df : {5.0, 24.0}) {
      double prev = 1.0;
      for (double ncp = -3.0; ncp <= 3.0; ncp += 0.5) {
        const double v = noncentral_t_cdf(x, NoncentralTDist(df, ncp));
        REQUIRE(v <= prev + 1e-12);
        prev = v;
      }
    }
  }
}

TEST_CASE("noncentral t against sampling-definition oracle") {
  const double df = 9.0, ncp = 3.0, x = 1.0;
  const auto mc = oracles::noncentral_t_mc(12345u, 1000000, df, ncp,
                                           [&](double t) { return t <= x ? 1.0 : 0.0; });
  const double analytic = noncentral_t_cdf(x, NoncentralTDist(df, ncp));
  REQUIRE(std::fabs(analytic - mc.mean) <= 3.0 * mc.std_error);
}

TEST_CASE("noncentral t large-ncp fallback stays consistent") {
  // Just inside vs just outside the series range should agree closely.
  const double a = noncentral_t_cdf(40.0, NoncentralTDist(12, 36.9));
  const double b = noncentral_t_cdf(40.0, NoncentralTDist(12, 37.1));
  REQUIRE(a > b);
  REQUIRE(std::fabs(a - b) < 0.05);
  // Reflection symmetry through the fallback path.
  const double c = noncentral_t_cdf(-40.0, NoncentralTDist(12, -38.0));
  const double d = noncentral_t_cdf(40.0, NoncentralTDist(12, 38.0));
  REQUIRE(std::fabs(c + d - 1.0) < 1e-9);
}

TEST_CASE("truncated expectation of the constant is one") {
  const auto one = [](double) { return 1.0; };
  for (double df : {1.0, 2.0, 5.0, 24.0, 49.0, 100.0}) {
    REQUIRE(std::fabs(truncated_t_expectation(one, TDist(df),
                                              TruncationRegion::negative_half()) - 1.0) < 1e-10);
    REQUIRE(std::fabs(truncated_t_expectation(one, TDist(df),
                                              TruncationRegion::positive_half()) - 1.0) < 1e-10);
  }
}

TEST_CASE("truncated expectation of the cdf is uniform mean") {
  // U = F(X) with X ~ t truncated below 0 is uniform on (0, 1/2): mean 1/4.
  for (double df : {4.0, 24.0}) {
    const TDist dist(df);
    const auto f = [&](double x) { return t_cdf(x, dist); };
    REQUIRE(std::fabs(truncated_t_expectation(f, dist, TruncationRegion::negative_half()) -
                      0.25) < 1e-8);
    REQUIRE(std::fabs(truncated_t_expectation(f, dist, TruncationRegion::positive_half()) -
                      0.75) < 1e-8);
  }
  // Monte Carlo cross-check of the same quantity.
  const TDist d24(24);
  const auto mc = oracles::noncentral_t_mc(777u, 1000000, 24.0, 0.0, [&](double t) {
    return t < 0.0 ? 2.0 * t_cdf(t, d24) : 0.0;  // 2x: conditioning on the half-line
  });
  const double analytic =
      truncated_t_expectation([&](double x) { return t_cdf(x, d24); }, d24,
                              TruncationRegion::negative_half());
  REQUIRE(std::fabs(analytic - mc.mean) <= 3.0 * mc.std_error);
}

TEST_CASE("truncated expectation of identity matches |t| mean") {
  // f(x) = x is unbounded, so the CDF substitution leaves integrable growth
  // at the far endpoint; give the quadrature room to refine there.
  const TDist d5(5);
  const QuadratureOptions opt{1e-5, 40};
  const double analytic = truncated_t_expectation([](double x) { return x; }, d5,
                                                  TruncationRegion::positive_half(), opt);
  const auto mc = oracles::noncentral_t_mc(31u, 1000000, 5.0, 0.0,
                                           [](double t) { return std::fabs(t); });
  REQUIRE(std::fabs(analytic - mc.mean) <= 3.0 * mc.std_error);
}

TEST_CASE("truncated expectation is deterministic") {
  const TDist dist(24);
  const NoncentralTDist nc(24, 1.7);
  const auto f = [&](double x) { return noncentral_t_cdf(x, nc); };
  const double a = truncated_t_expectation(f, dist, TruncationRegion::negative_half());
  const double b = truncated_t_expectation(f, dist, TruncationRegion::negative_half());
  REQUIRE(a == b);
}

TEST_CASE("truncated expectation rejects non-half-line regions and rough integrands") {
  const auto one = [](double) { return 1.0; };
  REQUIRE_THROWS_AS(
      truncated_t_expectation(one, TDist(5), TruncationRegion(-1.0, 1.0)),
      std::invalid_argument);
  const auto rough = [](double x) { return std::cos(1e6 * x); };
  REQUIRE_THROWS_AS(
      truncated_t_expectation(rough, TDist(5), TruncationRegion::negative_half()),
      quadrature_error);
}
