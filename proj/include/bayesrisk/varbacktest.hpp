#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bayesrisk/dates.hpp"
#include "bayesrisk/error.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk::backtest {

/// Upper-tail chi-square probability for 1 or 2 degrees of freedom.
inline double chi2_sf(double x, int k) {
  require(x >= 0.0, ErrorKind::Precondition, "chi2_sf needs x >= 0");
  require(k == 1 || k == 2, ErrorKind::Precondition, "chi2_sf supports k in {1,2}");
  if (k == 2) return std::exp(-0.5 * x);
  return std::erfc(std::sqrt(0.5 * x));
}

namespace detail {
// n * ln(p) with 0 * ln(0) = 0.
inline double xlogy(double n, double p) { return n == 0.0 ? 0.0 : n * std::log(p); }
}  // namespace detail

struct LrTest {
  double lr = 0.0;
  double p_value = 1.0;
};

/// Kupiec proportion-of-failures test.
inline LrTest kupiec(std::size_t T, std::size_t N, double level) {
  require(T > 0 && N <= T, ErrorKind::Precondition, "kupiec needs 0 <= N <= T, T > 0");
  require(level > 0.0 && level < 1.0, ErrorKind::Precondition, "level must be in (0,1)");
  const double t = static_cast<double>(T), n = static_cast<double>(N);
  const double p_hat = n / t;
  const double l0 = detail::xlogy(t - n, 1.0 - level) + detail::xlogy(n, level);
  const double l1 = detail::xlogy(t - n, 1.0 - p_hat) + detail::xlogy(n, p_hat);
  const double lr = std::max(0.0, -2.0 * (l0 - l1));
  return {lr, chi2_sf(lr, 1)};
}

struct TransitionCounts {
  std::uint64_t n00 = 0, n01 = 0, n10 = 0, n11 = 0;
};

inline TransitionCounts transition_counts(std::span<const int> hits) {
  TransitionCounts c;
  for (std::size_t t = 1; t < hits.size(); ++t) {
    const int a = hits[t - 1], b = hits[t];
    if (a == 0 && b == 0) ++c.n00;
    else if (a == 0 && b == 1) ++c.n01;
    else if (a == 1 && b == 0) ++c.n10;
    else ++c.n11;
  }
  return c;
}

/// Christoffersen first-order Markov independence test. Collapses to 0 when
/// no exceedance occurs or state 1 is never left/entered from.
inline LrTest christoffersen_ind(std::span<const int> hits) {
  require(hits.size() >= 2, ErrorKind::TooShort, "christoffersen_ind needs at least 2 observations");
  for (int h : hits) require(h == 0 || h == 1, ErrorKind::Precondition, "hits must be binary");
  const auto c = transition_counts(hits);
  const double n00 = static_cast<double>(c.n00), n01 = static_cast<double>(c.n01);
  const double n10 = static_cast<double>(c.n10), n11 = static_cast<double>(c.n11);
  if (n01 + n11 == 0.0 || n10 + n11 == 0.0 || n00 + n01 == 0.0) return {0.0, 1.0};
  const double pi01 = n01 / (n00 + n01);
  const double pi11 = n11 / (n10 + n11);
  const double pi = (n01 + n11) / (n00 + n01 + n10 + n11);
  const double restricted = detail::xlogy(n00 + n10, 1.0 - pi) + detail::xlogy(n01 + n11, pi);
  const double markov = detail::xlogy(n00, 1.0 - pi01) + detail::xlogy(n01, pi01) + detail::xlogy(n10, 1.0 - pi11) +
                        detail::xlogy(n11, pi11);
  const double lr = std::max(0.0, -2.0 * (restricted - markov));
  return {lr, chi2_sf(lr, 1)};
}

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for N successes out of T.
inline Interval wilson_interval(std::size_t N, std::size_t T, double conf = 0.95) {
  require(T > 0 && N <= T, ErrorKind::Precondition, "wilson_interval needs 0 <= N <= T, T > 0");
  require(conf > 0.0 && conf < 1.0, ErrorKind::Precondition, "confidence must be in (0,1)");
  const double z = special::normal_quantile(0.5 * (1.0 + conf));
  const double n = static_cast<double>(T);
  const double p = static_cast<double>(N) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  Interval out{centre - half, centre + half};
  if (N == 0) out.lo = 0.0;
  if (N == T) out.hi = 1.0;
  out.lo = std::max(0.0, out.lo);
  out.hi = std::min(1.0, out.hi);
  return out;
}

struct VarBacktestReport {
  std::string model;
  std::size_t T = 0;
  std::size_t N = 0;
  double p_hat = 0.0;
  double wilson_lo = 0.0, wilson_hi = 0.0;
  double lr_uc = 0.0, p_uc = 1.0;
  double lr_ind = 0.0, p_ind = 1.0;
  double lr_cc = 0.0, p_cc = 1.0;
};

inline VarBacktestReport conditional_coverage(std::size_t T, std::size_t N, std::span<const int> hits, double level,
                                              std::string model = {}) {
  std::size_t sum = 0;
  for (int h : hits) {
    require(h == 0 || h == 1, ErrorKind::Precondition, "hits must be binary");
    sum += static_cast<std::size_t>(h);
  }
  if (T != hits.size() || N != sum) {
    throw Error(ErrorKind::InconsistentCounts, "T=" + std::to_string(T) + ", N=" + std::to_string(N) +
                                                   " do not match hits (length " + std::to_string(hits.size()) +
                                                   ", sum " + std::to_string(sum) + ")");
  }
  VarBacktestReport r;
  r.model = std::move(model);
  r.T = T;
  r.N = N;
  r.p_hat = static_cast<double>(N) / static_cast<double>(T);
  const auto w = wilson_interval(N, T, 0.95);
  r.wilson_lo = w.lo;
  r.wilson_hi = w.hi;
  const auto uc = kupiec(T, N, level);
  r.lr_uc = uc.lr;
  r.p_uc = uc.p_value;
  const auto ind = christoffersen_ind(hits);
  r.lr_ind = ind.lr;
  r.p_ind = ind.p_value;
  r.lr_cc = r.lr_uc + r.lr_ind;
  r.p_cc = chi2_sf(r.lr_cc, 2);
  return r;
}

inline VarBacktestReport backtest(std::span<const int> hits, double level, std::string model = {}) {
  std::size_t n = 0;
  for (int h : hits) n += static_cast<std::size_t>(h == 1);
  return conditional_coverage(hits.size(), n, hits, level, std::move(model));
}

/// hit_t = 1 iff r_t < VaR_t.
inline std::vector<int> exceedances(std::span<const double> returns, std::span<const double> var) {
  require(returns.size() == var.size(), ErrorKind::LengthMismatch, "returns and VaR series differ in length");
  std::vector<int> hits(returns.size());
  for (std::size_t t = 0; t < returns.size(); ++t) hits[t] = returns[t] < var[t] ? 1 : 0;
  return hits;
}

struct ExceedanceSeries {
  std::vector<Date> dates;
  std::vector<int> hits;
};

}  // namespace bayesrisk::backtest
