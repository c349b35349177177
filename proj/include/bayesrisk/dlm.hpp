#pragma once

#include <limits>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "bayesrisk/error.hpp"
#include "bayesrisk/predictive.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk::dlm {

// ===========================================================================
// Variance-discount local-level filter
//
// Observation variance is unknown and learned through (n, S); C is kept in
// S-units so the one-step predictive is t_n(m, Q*S) with Q = C/delta + 1.

struct DiscountDlmState {
  double m = 0.0;
  double C = 1.0;
  double n = 10.0;
  double S = 1.0;
  double delta = 0.98;
  double beta_disc = 0.98;

  void validate() const {
    require(std::isfinite(m), ErrorKind::Precondition, "DLM state mean must be finite");
    require(C > 0.0 && S > 0.0 && n >= 1.0, ErrorKind::Precondition, "DLM state needs C > 0, S > 0, n >= 1");
    require(delta > 0.0 && delta <= 1.0 && beta_disc > 0.0 && beta_disc <= 1.0, ErrorKind::Precondition,
            "discount factors must lie in (0, 1]");
  }

  PredictiveDistribution predictive() const {
    const double R = C / delta;
    const double Q = R + 1.0;
    return PredictiveDistribution::student_t(n, m, std::sqrt(Q * S));
  }
};

struct DiscountStep {
  PredictiveDistribution predictive;
  DiscountDlmState next;
};

inline DiscountStep discount_filter_step(const DiscountDlmState& s, double y) {
  s.validate();
  if (!std::isfinite(y)) throw Error(ErrorKind::NonFiniteObservation, "discount filter observation is not finite");
  const double R = s.C / s.delta;
  const double Q = R + 1.0;
  const double f = s.m;
  auto predictive = PredictiveDistribution::student_t(s.n, f, std::sqrt(Q * s.S));

  const double e = y - f;
  const double A = R / Q;
  DiscountDlmState next = s;
  next.n = s.beta_disc * s.n + 1.0;
  next.S = s.S * (1.0 + (e * e / (Q * s.S) - 1.0) / next.n);
  next.m = s.m + A * e;
  next.C = (next.S / s.S) * (R - A * A * Q);
  return {std::move(predictive), next};
}

/// Predictive for index t uses y[0..t-1] only; the first comes from `init`.
inline std::vector<PredictiveDistribution> discount_filter_run(std::span<const double> y, const DiscountDlmState& init,
                                                               DiscountDlmState* final_state = nullptr) {
  require(!y.empty(), ErrorKind::Empty, "discount_filter_run needs a non-empty series");
  std::vector<PredictiveDistribution> out;
  out.reserve(y.size());
  DiscountDlmState state = init;
  for (double obs : y) {
    auto step = discount_filter_step(state, obs);
    out.push_back(std::move(step.predictive));
    state = step.next;
  }
  if (final_state) *final_state = state;
  return out;
}

/// m0 = mean, S0 = variance of the training values; C0 = 1 (S-units); n0 = 10.
inline DiscountDlmState moment_matched_init(std::span<const double> training, double delta = 0.98,
                                            double beta_disc = 0.98, double n0 = 10.0, double C0 = 1.0) {
  require(training.size() >= 2, ErrorKind::TooShort, "moment-matched init needs >= 2 training values");
  double mean = 0.0;
  for (double v : training) mean += v;
  mean /= static_cast<double>(training.size());
  double var = 0.0;
  for (double v : training) var += (v - mean) * (v - mean);
  var /= static_cast<double>(training.size() - 1);
  require(var > 0.0, ErrorKind::DegenerateVariance, "training values have zero variance");
  DiscountDlmState s{mean, C0, n0, var, delta, beta_disc};
  s.validate();
  return s;
}

// ===========================================================================
// Local-level model with explicit variances:
//   level_t = level_{t-1} + N(0, tau^2),  y_t = level_t + N(0, sigma_obs^2)

struct DlmHyper {
  double tau = 0.1;
  double sigma_obs = 0.1;
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454836;

// Prediction-error decomposition. `precision_weights`, when given, scales the
// observation variance of step t to sigma_obs^2 / w_t.
inline double kalman_loglik_impl(std::span<const double> y, double tau, double sigma_obs, double init_mean,
                                 double init_var, const double* precision_weights) {
  const double q = tau * tau;
  const double r = sigma_obs * sigma_obs;
  double a = init_mean;
  double P = init_var;
  double quad = 0.0;
  double log_det = 0.0;
  double det_block = 1.0;
  int block = 0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    P += q;
    const double rt = precision_weights ? r / precision_weights[t] : r;
    const double F = P + rt;
    const double v = y[t] - a;
    quad += v * v / F;
    det_block *= F;
    if (++block == 8) {
      log_det += std::log(det_block);
      det_block = 1.0;
      block = 0;
    }
    const double K = P / F;
    a += K * v;
    P *= (1.0 - K);
  }
  log_det += std::log(det_block);
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + log_det + quad);
}

}  // namespace detail

/// Exact Gaussian marginal log-likelihood. (init_mean, init_var) is the prior
/// on the level before the first observation.
inline double kalman_loglik(std::span<const double> y, const DlmHyper& h, double init_mean, double init_var) {
  require(!y.empty(), ErrorKind::Empty, "kalman_loglik needs a non-empty series");
  require(h.tau >= 0.0 && h.sigma_obs >= 0.0 && init_var >= 0.0, ErrorKind::Precondition,
          "variances must be non-negative");
  if (h.tau < 1e-12 && h.sigma_obs < 1e-12) {
    throw Error(ErrorKind::DegenerateVariance, "both tau and sigma_obs below 1e-12");
  }
  return detail::kalman_loglik_impl(y, h.tau, h.sigma_obs, init_mean, init_var, nullptr);
}

/// Level prior used when fitting: centred on the first observation with the
/// sample variance of the series.
struct LevelPrior {
  double mean;
  double var;
};

inline LevelPrior default_level_prior(std::span<const double> y) {
  require(y.size() >= 2, ErrorKind::TooShort, "level prior needs >= 2 observations");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size() - 1);
  return {y.front(), std::max(var, 1e-8)};
}

enum class ObservationNoise { Gaussian, StudentT };

struct MetropolisOptions {
  double prior_scale = 2.5;
  std::size_t n_draws = 1000;
  std::uint64_t seed = 0;
  ObservationNoise noise = ObservationNoise::Gaussian;
  double nu = 5.0;  // used when noise == StudentT
  std::optional<DlmHyper> start;
  std::optional<LevelPrior> level_prior;
};

struct MetropolisResult {
  std::vector<DlmHyper> draws;
  double acceptance_rate = 0.0;         // post-warm-up
  double warmup_acceptance_rate = 0.0;
  double proposal_scale = 0.0;
};

inline double half_cauchy_logpdf(double x, double scale) {
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p((x / scale) * (x / scale));
}

namespace detail {

struct Proposal {
  // lower-triangular 2x2 factor of the proposal covariance
  double l11 = 0.1, l21 = 0.0, l22 = 0.1;
  double scale = 1.0;
};

// Forward-filter backward-sample the level path given variances.
inline void ffbs_levels(std::span<const double> y, double tau, double sigma_obs, const LevelPrior& prior,
                        const std::vector<double>& weights, SeededStream& stream, std::vector<double>& levels,
                        std::vector<double>& fm, std::vector<double>& fc) {
  const std::size_t T = y.size();
  fm.resize(T);
  fc.resize(T);
  levels.resize(T);
  const double q = tau * tau;
  const double r = sigma_obs * sigma_obs;
  double a = prior.mean, P = prior.var;
  for (std::size_t t = 0; t < T; ++t) {
    P += q;
    const double F = P + r / weights[t];
    const double K = P / F;
    a += K * (y[t] - a);
    P *= (1.0 - K);
    fm[t] = a;
    fc[t] = P;
  }
  levels[T - 1] = fm[T - 1] + std::sqrt(fc[T - 1]) * stream.normal();
  for (std::size_t k = T - 1; k-- > 0;) {
    const double J = fc[k] / (fc[k] + q);
    const double mean = fm[k] + J * (levels[k + 1] - fm[k]);
    const double var = std::max(fc[k] - J * fc[k], 0.0);
    levels[k] = mean + std::sqrt(var) * stream.normal();
  }
}

}  // namespace detail

/// Random-walk Metropolis on (ln tau, ln sigma_obs) targeting the Kalman
/// marginal likelihood plus Half-Cauchy(0, prior_scale) priors and the
/// log-Jacobian. A warm-up of n_draws iterations (discarded) tunes the
/// proposal toward 25-40% acceptance; n_draws further iterations are kept.
///
/// With Student-t observation noise the chain is augmented with per-step
/// precision weights w_t ~ Gamma(nu/2, nu/2): each sweep does the Metropolis
/// step conditional on w, draws the level path by FFBS, then refreshes w.
inline MetropolisResult metropolis_hyper(std::span<const double> y, const MetropolisOptions& opt) {
  require(opt.n_draws >= 500, ErrorKind::Precondition, "metropolis_hyper needs n_draws >= 500");
  require(y.size() >= 10, ErrorKind::TooShort, "metropolis_hyper needs at least 10 observations");
  require(opt.prior_scale > 0.0, ErrorKind::Precondition, "prior scale must be positive");
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteObservation, "metropolis_hyper input not finite");
  }
  const LevelPrior prior = opt.level_prior ? *opt.level_prior : default_level_prior(y);
  const bool robust = opt.noise == ObservationNoise::StudentT;
  std::vector<double> weights(y.size(), 1.0);

  SeededStream stream = SeededStream(opt.seed, "dlm").derive("metropolis");
  SeededStream aux = stream.derive("augmentation");

  auto log_target = [&](double lt, double ls) {
    const double tau = std::exp(lt), sig = std::exp(ls);
    if (tau < 1e-12 && sig < 1e-12) return -std::numeric_limits<double>::infinity();
    const double ll =
        detail::kalman_loglik_impl(y, tau, sig, prior.mean, prior.var, robust ? weights.data() : nullptr);
    if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
    return ll + half_cauchy_logpdf(tau, opt.prior_scale) + half_cauchy_logpdf(sig, opt.prior_scale) + lt + ls;
  };

  double sd = std::sqrt(prior.var);
  DlmHyper start = opt.start ? *opt.start : DlmHyper{0.3 * sd, 0.3 * sd};
  double lt = std::log(std::max(start.tau, 1e-8));
  double ls = std::log(std::max(start.sigma_obs, 1e-8));
  double cur = log_target(lt, ls);
  if (!std::isfinite(cur)) throw Error(ErrorKind::ChainDiverged, "log target not finite at the start point");

  detail::Proposal prop;
  const std::size_t warmup = opt.n_draws;
  const std::size_t batch = 25;
  std::size_t batch_accepts = 0, warm_accepts = 0, kept_accepts = 0;
  std::vector<double> hist_t, hist_s;
  hist_t.reserve(warmup);
  hist_s.reserve(warmup);

  std::vector<double> levels, fm, fc;
  MetropolisResult result;
  result.draws.reserve(opt.n_draws);

  for (std::size_t it = 0; it < warmup + opt.n_draws; ++it) {
    const double z1 = stream.normal(), z2 = stream.normal();
    const double pt = lt + prop.scale * prop.l11 * z1;
    const double ps = ls + prop.scale * (prop.l21 * z1 + prop.l22 * z2);
    const double cand = log_target(pt, ps);
    const bool accept = std::isfinite(cand) && std::log(stream.uniform()) < cand - cur;
    if (accept) {
      lt = pt;
      ls = ps;
      cur = cand;
    }

    if (robust) {
      const double tau = std::exp(lt), sig = std::exp(ls);
      detail::ffbs_levels(y, tau, sig, prior, weights, aux, levels, fm, fc);
      for (std::size_t t = 0; t < y.size(); ++t) {
        const double e = (y[t] - levels[t]) / sig;
        weights[t] = aux.gamma(0.5 * (opt.nu + 1.0)) / (0.5 * (opt.nu + e * e));
      }
      cur = log_target(lt, ls);
    }

    if (it < warmup) {
      warm_accepts += accept;
      batch_accepts += accept;
      hist_t.push_back(lt);
      hist_s.push_back(ls);
      if ((it + 1) % batch == 0) {
        const double rate = static_cast<double>(batch_accepts) / batch;
        prop.scale *= std::exp(2.0 * (rate - 0.325));
        prop.scale = std::clamp(prop.scale, 1e-3, 1e3);
        batch_accepts = 0;
      }
      // Halfway through warm-up, switch to a correlated proposal shaped by the
      // second quarter of the warm-up path.
      if (it + 1 == warmup / 2) {
        const std::size_t lo = warmup / 4, hi = warmup / 2;
        double mt = 0, ms = 0;
        for (std::size_t k = lo; k < hi; ++k) {
          mt += hist_t[k];
          ms += hist_s[k];
        }
        const double cnt = static_cast<double>(hi - lo);
        mt /= cnt;
        ms /= cnt;
        double ctt = 0, css = 0, cts = 0;
        for (std::size_t k = lo; k < hi; ++k) {
          ctt += (hist_t[k] - mt) * (hist_t[k] - mt);
          css += (hist_s[k] - ms) * (hist_s[k] - ms);
          cts += (hist_t[k] - mt) * (hist_s[k] - ms);
        }
        ctt /= cnt - 1;
        css /= cnt - 1;
        cts /= cnt - 1;
        if (ctt > 1e-10 && css > 1e-10) {
          const double l11 = std::sqrt(ctt);
          const double l21 = cts / l11;
          const double rem = css - l21 * l21;
          if (rem > 1e-12) {
            prop.l11 = l11;
            prop.l21 = l21;
            prop.l22 = std::sqrt(rem);
            prop.scale = 2.38 / std::sqrt(2.0);
          }
        }
      }
    } else {
      kept_accepts += accept;
      result.draws.push_back({std::exp(lt), std::exp(ls)});
    }
  }
  result.warmup_acceptance_rate = static_cast<double>(warm_accepts) / static_cast<double>(warmup);
  result.acceptance_rate = static_cast<double>(kept_accepts) / static_cast<double>(opt.n_draws);
  result.proposal_scale = prop.scale;
  if (result.acceptance_rate < 0.01) {
    throw Error(ErrorKind::ChainDiverged,
                "acceptance rate " + std::to_string(result.acceptance_rate) + " below 1%");
  }
  return result;
}

// ===========================================================================
// Posterior-predictive forecasting over hyperparameter draws

/// One Kalman filter per hyperparameter draw, advanced together. The
/// one-step predictive is the equal-weight mixture of the per-draw
/// Gaussian predictives.
class LocalLevelMixture {
 public:
  LocalLevelMixture(std::vector<DlmHyper> draws, const LevelPrior& prior) : draws_(std::move(draws)) {
    require(!draws_.empty(), ErrorKind::Precondition, "dlm forecast needs at least one draw");
    a_.assign(draws_.size(), prior.mean);
    P_.assign(draws_.size(), prior.var);
  }

  void update(double y) {
    if (!std::isfinite(y)) throw Error(ErrorKind::NonFiniteObservation, "dlm observation is not finite");
    for (std::size_t i = 0; i < draws_.size(); ++i) {
      const double q = draws_[i].tau * draws_[i].tau;
      const double r = draws_[i].sigma_obs * draws_[i].sigma_obs;
      const double P = P_[i] + q;
      const double F = P + r;
      const double K = P / F;
      a_[i] += K * (y - a_[i]);
      P_[i] = P * (1.0 - K);
    }
  }

  void update(std::span<const double> y) {
    for (double v : y) update(v);
  }

  PredictiveDistribution predictive() const {
    std::vector<GaussianForecast> comps;
    comps.reserve(draws_.size());
    for (std::size_t i = 0; i < draws_.size(); ++i) {
      const double q = draws_[i].tau * draws_[i].tau;
      const double r = draws_[i].sigma_obs * draws_[i].sigma_obs;
      comps.push_back({a_[i], std::sqrt(P_[i] + q + r)});
    }
    if (comps.size() == 1) return PredictiveDistribution::gaussian(comps[0].mean, comps[0].sd);
    return PredictiveDistribution::equal_mixture(std::move(comps));
  }

  std::size_t size() const { return draws_.size(); }

 private:
  std::vector<DlmHyper> draws_;
  std::vector<double> a_;
  std::vector<double> P_;
};

/// One-step predictive for the observation after y.back().
inline PredictiveDistribution dlm_forecast(std::span<const double> y, std::span<const DlmHyper> draws,
                                           std::optional<LevelPrior> prior = std::nullopt) {
  require(!draws.empty(), ErrorKind::Precondition, "dlm_forecast needs at least one draw");
  require(!y.empty(), ErrorKind::Empty, "dlm_forecast needs observations");
  const LevelPrior p = prior ? *prior : (y.size() >= 2 ? default_level_prior(y) : LevelPrior{y.front(), 1.0});
  LocalLevelMixture mix(std::vector<DlmHyper>(draws.begin(), draws.end()), p);
  mix.update(y);
  return mix.predictive();
}

}  // namespace bayesrisk::dlm
