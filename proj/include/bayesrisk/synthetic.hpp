#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bayesrisk/compliance.hpp"
#include "bayesrisk/dates.hpp"
#include "bayesrisk/marketdata.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/special.hpp"

// Labeled synthetic fixtures used where the public datasets are absent.
namespace bayesrisk::synthetic {

/// Weekdays from `start` onward (no holiday calendar).
inline std::vector<Date> business_days(Date start, std::size_t n) {
  std::vector<Date> out;
  out.reserve(n);
  std::int32_t d = start.days();
  while (out.size() < n) {
    // 1970-01-01 was a Thursday: (days + 4) % 7 gives 0 = Sunday.
    const int dow = static_cast<int>(((d + 4) % 7 + 7) % 7);
    if (dow != 0 && dow != 6) out.push_back(Date(d));
    ++d;
  }
  return out;
}

/// Stochastic-volatility log-returns:
///   h_t = mu + phi (h_{t-1} - mu) + eta e_t,  r_t = exp(h_t / 2) z_t,
/// z_t unit-variance Student-t(nu) (Gaussian when nu <= 0).
struct SvParams {
  double mu = std::log(0.011 * 0.011);
  double phi = 0.985;
  double eta = 0.15;
  double nu = 8.0;
  double drift = 0.0002;
};

inline PriceSeries sv_prices(Date start, std::size_t n_days, std::uint64_t seed, const SvParams& p = {}) {
  SeededStream stream = SeededStream(seed, "synthetic").derive("sv-prices");
  const auto dates = business_days(start, n_days);
  PriceSeries out;
  out.dates = dates;
  out.closes.reserve(n_days);
  double h = p.mu;
  double logp = std::log(1000.0);
  const double t_scale = p.nu > 2.0 ? std::sqrt((p.nu - 2.0) / p.nu) : 1.0;
  for (std::size_t t = 0; t < n_days; ++t) {
    if (t > 0) {
      h = p.mu + p.phi * (h - p.mu) + p.eta * stream.normal();
      const double z = p.nu > 2.0 ? stream.student_t(p.nu) * t_scale : stream.normal();
      logp += p.drift + std::exp(0.5 * h) * z;
    }
    out.closes.push_back(std::exp(logp));
  }
  return out;
}

/// Transactions in the public fraud-file layout with a known logistic
/// generator on (V1..V28, standardized log1p(Amount)).
struct TransactionParams {
  double intercept = -6.2;
  std::array<double, kTransactionFeatures> weights{1.6, -1.3, 1.1, 0.9, -0.7, 0.5, -0.4, 0.3};
  double amount_weight = 0.4;
  double mean_gap_s = 0.6;
  double amount_log_mean = 3.5;
  double amount_log_sd = 1.2;
};

inline double true_logit(const TransactionRecord& r, const TransactionParams& p) {
  double eta = p.intercept;
  for (std::size_t j = 0; j < kTransactionFeatures; ++j) eta += p.weights[j] * r.features[j];
  eta += p.amount_weight * (std::log1p(r.amount) - p.amount_log_mean) / p.amount_log_sd;
  return eta;
}

inline std::vector<TransactionRecord> transactions(std::size_t n, std::uint64_t seed, const TransactionParams& p = {}) {
  SeededStream stream = SeededStream(seed, "synthetic").derive("transactions");
  std::vector<TransactionRecord> out(n);
  double t = 0.0;
  for (auto& r : out) {
    t += -p.mean_gap_s * std::log(stream.uniform());
    r.time_s = std::round(t);
    for (auto& v : r.features) v = stream.normal();
    r.amount = std::round(100.0 * std::expm1(std::max(0.0, p.amount_log_mean + p.amount_log_sd * stream.normal()))) / 100.0;
    r.label = stream.uniform() < special::sigmoid(true_logit(r, p)) ? 1 : 0;
  }
  return out;
}

/// Dynamic-logistic compliance series: x is a persistent AR(1) with unit
/// stationary variance, (alpha, beta) follow Gaussian random walks of sd
/// `drift_sd` (0 keeps them fixed), y ~ Bernoulli(sigmoid(alpha + beta x)).
struct ComplianceParams {
  double alpha0 = -2.0;
  double beta0 = 1.2;
  double drift_sd = 0.0;
  double x_ar = 0.97;
};

struct ComplianceSeries {
  std::vector<compliance::ComplianceObs> obs;
  std::vector<double> alpha, beta;
};

inline ComplianceSeries compliance_series(std::size_t T, std::uint64_t seed, const ComplianceParams& p = {}) {
  SeededStream stream = SeededStream(seed, "synthetic").derive("compliance");
  ComplianceSeries out;
  const Date start = Date::from_ymd(2010, 1, 4);
  const auto dates = business_days(start, T);
  const double innov = std::sqrt(1.0 - p.x_ar * p.x_ar);
  double x = stream.normal(), a = p.alpha0, b = p.beta0;
  for (std::size_t t = 0; t < T; ++t) {
    x = p.x_ar * x + innov * stream.normal();
    a += p.drift_sd * stream.normal();
    b += p.drift_sd * stream.normal();
    const int y = stream.uniform() < special::sigmoid(a + b * x) ? 1 : 0;
    out.obs.push_back({dates[t], x, y});
    out.alpha.push_back(a);
    out.beta.push_back(b);
  }
  return out;
}

}  // namespace bayesrisk::synthetic
