#pragma once

#include <limits>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <utility>
#include <span>
#include <vector>

#include "bayesrisk/dates.hpp"
#include "bayesrisk/error.hpp"
#include "bayesrisk/fraud.hpp"
#include "bayesrisk/marketdata.hpp"
#include "bayesrisk/metrics.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk::compliance {

struct ComplianceObs {
  Date date;
  double x = 0.0;  // standardized lagged log realized volatility
  int y = 0;
};

struct ComplianceModelSpec {
  std::size_t n_particles = 5000;
  double rw_sd_alpha = 0.02;
  double rw_sd_beta = 0.02;
  double resample_trigger = 0.5;  // resample when ESS < trigger * n

  void validate() const {
    require(n_particles >= 1000, ErrorKind::Precondition, "n_particles must be at least 1000");
    require(rw_sd_alpha > 0.0 && rw_sd_beta > 0.0, ErrorKind::Precondition, "random-walk sds must be positive");
    require(resample_trigger > 0.0 && resample_trigger <= 1.0, ErrorKind::Precondition,
            "resample trigger must be in (0, 1]");
  }
};

struct ComplianceState {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> weights;
  double ess = 0.0;

  std::size_t size() const { return alpha.size(); }

  void validate() const {
    require(!alpha.empty() && alpha.size() == beta.size() && alpha.size() == weights.size(), ErrorKind::Precondition,
            "particle arrays must be non-empty and equally sized");
    double s = 0.0;
    for (double w : weights) {
      require(w >= 0.0 && std::isfinite(w), ErrorKind::Precondition, "weights must be finite and non-negative");
      s += w;
    }
    require(std::fabs(s - 1.0) <= 1e-9, ErrorKind::Precondition, "weights must sum to 1");
  }

  double weighted_mean(const std::vector<double>& v) const {
    double m = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) m += weights[i] * v[i];
    return m;
  }
};

/// Initial particle cloud: alpha = logit(Beta(a, b)) draw, beta ~ N(beta_mean, beta_sd).
/// With `gaussian_alpha` set, alpha ~ N(alpha_mean, alpha_sd) instead; the
/// defaults match the first two moments of logit Beta(2, 8).
struct InitPrior {
  double beta_a = 2.0;
  double beta_b = 8.0;
  bool gaussian_alpha = false;
  double alpha_mean = -1.5928571428571428;
  double alpha_sd = 0.8820834998064948;
  double beta_mean = 0.0;
  double beta_sd = 1.0;
};

inline ComplianceState initial_state(const ComplianceModelSpec& spec, const InitPrior& prior, SeededStream stream) {
  spec.validate();
  const std::size_t n = spec.n_particles;
  ComplianceState s;
  s.alpha.resize(n);
  s.beta.resize(n);
  s.weights.assign(n, 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (prior.gaussian_alpha) {
      s.alpha[i] = prior.alpha_mean + prior.alpha_sd * stream.normal();
    } else {
      const double p = std::clamp(stream.beta(prior.beta_a, prior.beta_b), 1e-12, 1.0 - 1e-12);
      s.alpha[i] = std::log(p / (1.0 - p));
    }
    s.beta[i] = prior.beta_mean + prior.beta_sd * stream.normal();
  }
  s.ess = static_cast<double>(n);
  return s;
}

inline double effective_sample_size(std::span<const double> w) {
  double ss = 0.0;
  for (double v : w) ss += v * v;
  return 1.0 / ss;
}

/// Systematic resampling: one uniform offset, n evenly spaced pointers.
inline std::vector<std::size_t> systematic_resample(std::span<const double> w, double u0) {
  const std::size_t n = w.size();
  std::vector<std::size_t> idx(n);
  const double step = 1.0 / static_cast<double>(n);
  double cum = w[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (u0 + static_cast<double>(i)) * step;
    while (u > cum && j + 1 < n) cum += w[++j];
    idx[i] = j;
  }
  return idx;
}

struct StepResult {
  double risk = 0.0;
  ComplianceState state;
  bool resampled = false;
};

/// One filter step. The returned risk is computed after propagation and
/// before the observation y is used.
inline StepResult pf_step(ComplianceState state, const ComplianceModelSpec& spec, const ComplianceObs& obs,
                          SeededStream stream) {
  require(obs.y == 0 || obs.y == 1, ErrorKind::Precondition, "compliance labels must be 0/1");
  require(std::isfinite(obs.x), ErrorKind::NonFiniteObservation, "non-finite compliance covariate");
  const std::size_t n = state.size();
  require(n > 0 && state.beta.size() == n && state.weights.size() == n, ErrorKind::Precondition,
          "particle arrays must be non-empty and equally sized");

  SeededStream move = stream.derive("propagate");
  for (std::size_t i = 0; i < n; ++i) {
    state.alpha[i] += spec.rw_sd_alpha * move.normal();
    state.beta[i] += spec.rw_sd_beta * move.normal();
  }

  StepResult out;
  std::vector<double> logw(n);
  double risk = 0.0, max_lw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double eta = state.alpha[i] + state.beta[i] * obs.x;
    risk += state.weights[i] * special::sigmoid(eta);
    // log sigmoid(eta) = -log1p(exp(-eta))
    const double ll = obs.y == 1 ? -special::log1p_exp(-eta) : -special::log1p_exp(eta);
    logw[i] = state.weights[i] > 0.0 ? std::log(state.weights[i]) + ll : -std::numeric_limits<double>::infinity();
    max_lw = std::max(max_lw, logw[i]);
  }
  out.risk = risk;
  if (!std::isfinite(max_lw)) throw Error(ErrorKind::WeightCollapse, "every particle weight is zero");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    state.weights[i] = std::exp(logw[i] - max_lw);
    total += state.weights[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw Error(ErrorKind::WeightCollapse, "particle weights collapsed");
  for (double& w : state.weights) w /= total;
  state.ess = effective_sample_size(state.weights);

  if (state.ess < spec.resample_trigger * static_cast<double>(n)) {
    SeededStream rs = stream.derive("resample");
    const auto idx = systematic_resample(state.weights, rs.uniform());
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = state.alpha[idx[i]];
      b[i] = state.beta[idx[i]];
    }
    state.alpha = std::move(a);
    state.beta = std::move(b);
    state.weights.assign(n, 1.0 / static_cast<double>(n));
    state.ess = static_cast<double>(n);
    out.resampled = true;
  }
  out.state = std::move(state);
  return out;
}

namespace detail {

// Weighted lower/upper quantiles from a single sort of the cloud.
inline std::pair<double, double> weighted_band(const std::vector<double>& v, const std::vector<double>& w, double lo,
                                               double hi, std::vector<std::size_t>& order) {
  order.resize(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  double cum = 0.0;
  std::optional<double> q_lo;
  for (std::size_t k : order) {
    cum += w[k];
    if (!q_lo && cum >= lo) q_lo = v[k];
    if (cum >= hi) return {*q_lo, v[k]};
  }
  return {q_lo ? *q_lo : v[order.back()], v[order.back()]};
}

}  // namespace detail

struct PfRun {
  std::vector<double> risk;
  std::vector<double> alpha_mean, beta_mean;
  std::vector<double> alpha_lo, alpha_hi;  // central 90% filtered band
  std::vector<double> beta_lo, beta_hi;
  std::vector<double> ess;
  std::size_t resample_count = 0;
  ComplianceState final_state;
};

struct RunOptions {
  bool bands = true;  // weighted 5%/95% quantiles per step (one sort of the cloud per step)
};

/// Runs the filter over the whole series. Step t uses stream
/// derive("step", t), so risks never depend on labels at or after t.
inline PfRun pf_run(std::span<const ComplianceObs> obs, const ComplianceModelSpec& spec, const InitPrior& prior,
                    std::uint64_t seed, const RunOptions& ro = {}) {
  require(!obs.empty(), ErrorKind::Empty, "compliance series is empty");
  spec.validate();
  const SeededStream root = SeededStream(seed, "compliance");
  ComplianceState state = initial_state(spec, prior, root.derive("init"));
  PfRun run;
  const std::size_t T = obs.size();
  run.risk.reserve(T);
  run.alpha_mean.reserve(T);
  run.beta_mean.reserve(T);
  run.ess.reserve(T);
  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < T; ++t) {
    StepResult sr = pf_step(std::move(state), spec, obs[t], root.derive("step", t));
    state = std::move(sr.state);
    run.resample_count += sr.resampled ? 1 : 0;
    run.risk.push_back(sr.risk);
    run.alpha_mean.push_back(state.weighted_mean(state.alpha));
    run.beta_mean.push_back(state.weighted_mean(state.beta));
    run.ess.push_back(state.ess);
    if (ro.bands) {
      const auto [alo, ahi] = detail::weighted_band(state.alpha, state.weights, 0.05, 0.95, order);
      const auto [blo, bhi] = detail::weighted_band(state.beta, state.weights, 0.05, 0.95, order);
      run.alpha_lo.push_back(alo);
      run.alpha_hi.push_back(ahi);
      run.beta_lo.push_back(blo);
      run.beta_hi.push_back(bhi);
    }
  }
  run.final_state = std::move(state);
  return run;
}

// ---------------------------------------------------------------------------
// Labels and covariates

/// Type-7 (linear interpolation) sample quantile.
inline double quantile_type7(std::vector<double> v, double p) {
  require(!v.empty(), ErrorKind::Empty, "quantile of an empty window");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct ProxyLabels {
  std::vector<Date> dates;
  std::vector<int> labels;
  std::size_t first_index = 0;  // position in the vol series of labels[0]
};

/// label_t = 1 iff rv_t > quantile of rv over the `lookback` values strictly before t.
inline ProxyLabels make_proxy_labels(const VolSeries& vol, double quantile = 0.90, std::size_t lookback = 252) {
  require(quantile > 0.0 && quantile < 1.0, ErrorKind::Precondition, "quantile must be in (0,1)");
  require(lookback >= 1, ErrorKind::Precondition, "lookback must be positive");
  require(vol.size() > lookback, ErrorKind::TooShort,
          "proxy labels need more than " + std::to_string(lookback) + " volatility values");
  ProxyLabels out;
  out.first_index = lookback;
  for (std::size_t t = lookback; t < vol.size(); ++t) {
    std::vector<double> window(vol.rv.begin() + static_cast<std::ptrdiff_t>(t - lookback),
                               vol.rv.begin() + static_cast<std::ptrdiff_t>(t));
    out.dates.push_back(vol.dates[t]);
    out.labels.push_back(vol.rv[t] > quantile_type7(std::move(window), quantile) ? 1 : 0);
  }
  return out;
}

struct CovariateScaling {
  double mean = 0.0;
  double sd = 1.0;
  std::size_t train_rows = 0;
};

struct ObservationSet {
  std::vector<ComplianceObs> obs;
  CovariateScaling scaling;
};

/// Pairs each label with x_t = standardized ln rv_{t-1}; the mean/sd come
/// from the first `train_fraction` of the rows only.
inline ObservationSet make_observations(const VolSeries& vol, const ProxyLabels& labels, double train_fraction = 0.8) {
  require(labels.first_index >= 1, ErrorKind::Precondition, "labels must start after the first vol value");
  require(labels.first_index + labels.labels.size() <= vol.size(), ErrorKind::LengthMismatch,
          "labels extend past the volatility series");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Precondition, "train fraction must be in (0,1)");
  const std::size_t n = labels.labels.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  require(n_train >= 2 && n_train < n, ErrorKind::EmptyPartition, "compliance split leaves an empty partition");
  std::vector<double> raw(n);
  for (std::size_t k = 0; k < n; ++k) raw[k] = vol.y[labels.first_index + k - 1];
  double mean = 0.0;
  for (std::size_t k = 0; k < n_train; ++k) mean += raw[k];
  mean /= static_cast<double>(n_train);
  double var = 0.0;
  for (std::size_t k = 0; k < n_train; ++k) var += (raw[k] - mean) * (raw[k] - mean);
  var /= static_cast<double>(n_train - 1);
  require(var > 0.0, ErrorKind::DegenerateVariance, "covariate has zero variance on the training span");
  ObservationSet set;
  set.scaling = {mean, std::sqrt(var), n_train};
  set.obs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    set.obs.push_back({labels.dates[k], (raw[k] - mean) / set.scaling.sd, labels.labels[k]});
  }
  return set;
}

// ---------------------------------------------------------------------------
// Baselines

/// Static logistic regression on x (MAP plug-in), scored on the test rows.
inline std::vector<metrics::ScoredCase> baseline_logistic(std::span<const ComplianceObs> train,
                                                          std::span<const ComplianceObs> test) {
  fraud::Matrix X(static_cast<Eigen::Index>(train.size()), 1);
  fraud::Vector y(static_cast<Eigen::Index>(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    X(static_cast<Eigen::Index>(i), 0) = train[i].x;
    y[static_cast<Eigen::Index>(i)] = train[i].y;
  }
  const auto post = fraud::fit_map(X, y);
  fraud::Matrix Xt(static_cast<Eigen::Index>(test.size()), 1);
  for (std::size_t i = 0; i < test.size(); ++i) Xt(static_cast<Eigen::Index>(i), 0) = test[i].x;
  const fraud::Vector p = fraud::predict_map(post, Xt);
  std::vector<metrics::ScoredCase> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) out.push_back({p[static_cast<Eigen::Index>(i)], test[i].y});
  return out;
}

/// Training prevalence, used as a constant score.
inline double baseline_frequency(std::span<const int> train_labels) {
  require(!train_labels.empty(), ErrorKind::Empty, "frequency baseline needs at least one label");
  double s = 0.0;
  for (int y : train_labels) s += y;
  return s / static_cast<double>(train_labels.size());
}

}  // namespace bayesrisk::compliance
