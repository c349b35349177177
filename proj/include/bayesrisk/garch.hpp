#pragma once

#include <limits>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bayesrisk/error.hpp"
#include "bayesrisk/optimize.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk::garch {

enum class Innovation { Gaussian, StudentT };

inline std::string to_string(Innovation i) { return i == Innovation::Gaussian ? "gaussian" : "student_t"; }

/// sigma2_t = omega + sum_{i<=q} alpha_i eps2_{t-i} + sum_{j<=p} beta_j sigma2_{t-j}
struct GarchSpec {
  int p = 1;
  int q = 1;
  Innovation innovation = Innovation::Gaussian;

  void validate() const {
    require(p >= 1 && p <= 2 && q >= 1 && q <= 2, ErrorKind::Precondition, "GARCH orders must be in {1,2}");
  }
  std::size_t n_params() const {
    return 2 + static_cast<std::size_t>(p + q) + (innovation == Innovation::StudentT ? 1 : 0);
  }
  std::string name() const {
    return "GARCH(" + std::to_string(p) + "," + std::to_string(q) + ")-" +
           (innovation == Innovation::Gaussian ? "N" : "t");
  }
  friend bool operator==(const GarchSpec&, const GarchSpec&) = default;
};

struct GarchParams {
  double mu = 0.0;
  double omega = 1e-6;
  std::vector<double> alpha;  // q entries
  std::vector<double> beta;   // p entries
  double nu = std::numeric_limits<double>::infinity();       // student_t only

  /// Flat layout [mu, omega, alpha..., beta..., (nu)].
  std::vector<double> flatten(const GarchSpec& spec) const {
    std::vector<double> v{mu, omega};
    v.insert(v.end(), alpha.begin(), alpha.end());
    v.insert(v.end(), beta.begin(), beta.end());
    if (spec.innovation == Innovation::StudentT) v.push_back(nu);
    return v;
  }

  static GarchParams unflatten(const GarchSpec& spec, std::span<const double> v) {
    require(v.size() == spec.n_params(), ErrorKind::DimensionMismatch,
            "GARCH parameter vector has wrong length for " + spec.name());
    GarchParams out;
    out.mu = v[0];
    out.omega = v[1];
    std::size_t k = 2;
    out.alpha.assign(v.begin() + 2, v.begin() + 2 + spec.q);
    k += static_cast<std::size_t>(spec.q);
    out.beta.assign(v.begin() + static_cast<std::ptrdiff_t>(k), v.begin() + static_cast<std::ptrdiff_t>(k) + spec.p);
    k += static_cast<std::size_t>(spec.p);
    if (spec.innovation == Innovation::StudentT) out.nu = v[k];
    return out;
  }

  double persistence() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    for (double b : beta) s += b;
    return s;
  }
};

struct GarchFit {
  GarchSpec spec;
  GarchParams params;
  double loglik = -std::numeric_limits<double>::infinity();
  double bic = std::numeric_limits<double>::infinity();
  double presample_var = 0.0;
  std::size_t n_obs = 0;
  std::size_t evals = 0;
  std::vector<double> start_logliks;  // loglik at every multi-start initial point
};

inline void check_constraints(const GarchSpec& spec, const GarchParams& prm) {
  spec.validate();
  require(prm.alpha.size() == static_cast<std::size_t>(spec.q) && prm.beta.size() == static_cast<std::size_t>(spec.p),
          ErrorKind::DimensionMismatch, "alpha/beta lengths must match (q, p)");
  if (!(prm.omega > 0.0) || !std::isfinite(prm.mu)) {
    throw Error(ErrorKind::ConstraintViolated, "omega must be positive");
  }
  for (double a : prm.alpha) if (!(a >= 0.0)) throw Error(ErrorKind::ConstraintViolated, "alpha must be >= 0");
  for (double b : prm.beta) if (!(b >= 0.0)) throw Error(ErrorKind::ConstraintViolated, "beta must be >= 0");
  if (!(prm.persistence() < 1.0)) {
    throw Error(ErrorKind::ConstraintViolated,
                "sum(alpha)+sum(beta) = " + std::to_string(prm.persistence()) + " violates stationarity");
  }
  if (spec.innovation == Innovation::StudentT && !(prm.nu > 2.0)) {
    throw Error(ErrorKind::ConstraintViolated, "nu must exceed 2");
  }
}

inline double sample_variance(std::span<const double> r) {
  require(r.size() >= 2, ErrorKind::TooShort, "need at least 2 returns");
  double m = 0.0;
  for (double v : r) m += v;
  m /= static_cast<double>(r.size());
  double s = 0.0;
  for (double v : r) s += (v - m) * (v - m);
  return s / static_cast<double>(r.size() - 1);
}

/// sigma2 for t = 0..T; entry T is the one-step-ahead forecast. Pre-sample
/// eps2 and sigma2 are set to `presample_var`.
inline std::vector<double> conditional_variances(const GarchSpec& spec, const GarchParams& prm,
                                                 std::span<const double> r, double presample_var) {
  const std::size_t T = r.size();
  std::vector<double> s2(T + 1);
  auto eps2 = [&](std::ptrdiff_t t) {
    if (t < 0) return presample_var;
    const double e = r[static_cast<std::size_t>(t)] - prm.mu;
    return e * e;
  };
  auto sig2 = [&](std::ptrdiff_t t) { return t < 0 ? presample_var : s2[static_cast<std::size_t>(t)]; };
  for (std::size_t t = 0; t <= T; ++t) {
    const auto ti = static_cast<std::ptrdiff_t>(t);
    double v = prm.omega;
    for (int i = 1; i <= spec.q; ++i) v += prm.alpha[static_cast<std::size_t>(i - 1)] * eps2(ti - i);
    for (int j = 1; j <= spec.p; ++j) v += prm.beta[static_cast<std::size_t>(j - 1)] * sig2(ti - j);
    s2[t] = v;
  }
  return s2;
}

namespace detail {

inline double loglik_unchecked(const GarchSpec& spec, const GarchParams& prm, std::span<const double> r,
                               double presample_var) {
  const std::size_t T = r.size();
  double e1 = presample_var, e2 = presample_var;  // eps2 at t-1, t-2
  double s1 = presample_var, s2 = presample_var;  // sigma2 at t-1, t-2
  const double a1 = prm.alpha[0], a2 = spec.q > 1 ? prm.alpha[1] : 0.0;
  const double b1 = prm.beta[0], b2 = spec.p > 1 ? prm.beta[1] : 0.0;
  const bool t_innov = spec.innovation == Innovation::StudentT;
  const double nu = prm.nu;
  const double c_t = t_innov ? std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                                   0.5 * std::log(std::numbers::pi * (nu - 2.0))
                             : 0.0;
  double quad = 0.0, log_det = 0.0, det_block = 1.0, tail = 0.0;
  int block = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const double v = prm.omega + a1 * e1 + a2 * e2 + b1 * s1 + b2 * s2;
    if (!(v > 0.0) || !std::isfinite(v)) return -std::numeric_limits<double>::infinity();
    const double e = r[t] - prm.mu;
    const double ee = e * e;
    if (t_innov) {
      tail += std::log1p(ee / ((nu - 2.0) * v));
    } else {
      quad += ee / v;
    }
    det_block *= v;
    if (++block == 8) {
      log_det += std::log(det_block);
      det_block = 1.0;
      block = 0;
    }
    e2 = e1;
    e1 = ee;
    s2 = s1;
    s1 = v;
  }
  log_det += std::log(det_block);
  const double n = static_cast<double>(T);
  if (t_innov) return n * c_t - 0.5 * log_det - 0.5 * (nu + 1.0) * tail;
  return -0.5 * (n * 1.8378770664093454836 + log_det + quad);
}

}  // namespace detail

/// Conditional log-likelihood. Student-t innovations use the unit-variance
/// standardization. Pre-sample values are the sample variance of r.
inline double garch_loglik(std::span<const double> r, const GarchSpec& spec, std::span<const double> params) {
  spec.validate();
  require(r.size() > static_cast<std::size_t>(10 * (spec.p + spec.q)), ErrorKind::TooShort,
          "garch_loglik needs more than 10*(p+q) returns");
  const GarchParams prm = GarchParams::unflatten(spec, params);
  check_constraints(spec, prm);
  const double ll = detail::loglik_unchecked(spec, prm, r, sample_variance(r));
  if (!std::isfinite(ll)) throw Error(ErrorKind::NonFiniteLikelihood, "GARCH log-likelihood is not finite");
  return ll;
}

struct FitOptions {
  std::size_t n_starts = 5;
  std::size_t max_evals_per_start = 3000;
  std::optional<GarchParams> warm_start;  // tried in addition to the multi-starts
};

namespace detail {

// Unconstrained coordinates:
//   mu    = mean + sd * th0
//   pers  = logistic(th2), shares of pers among (alpha..., beta...) = softmax(0, th3...)
//   omega = var * (1 - pers) * exp(th1)
//   nu    = 2 + exp(th_last)
struct Transform {
  GarchSpec spec;
  double mean;
  double sd;
  double var;

  std::size_t dim() const { return spec.n_params(); }

  GarchParams to_params(const std::vector<double>& th) const {
    GarchParams p;
    p.mu = mean + sd * th[0];
    const double pers = 1.0 / (1.0 + std::exp(-th[2]));
    const std::size_t k = static_cast<std::size_t>(spec.p + spec.q);
    std::vector<double> w(k);
    double mx = 0.0;
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, th[2 + i]);
    double tot = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      w[i] = std::exp((i == 0 ? 0.0 : th[2 + i]) - mx);
      tot += w[i];
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(spec.q); ++i) p.alpha.push_back(pers * w[i] / tot);
    for (std::size_t j = 0; j < static_cast<std::size_t>(spec.p); ++j) {
      p.beta.push_back(pers * w[static_cast<std::size_t>(spec.q) + j] / tot);
    }
    p.omega = var * (1.0 - pers) * std::exp(th[1]);
    if (spec.innovation == Innovation::StudentT) p.nu = 2.0 + std::exp(th[dim() - 1]);
    return p;
  }

  std::vector<double> from_params(const GarchParams& p) const {
    std::vector<double> th(dim(), 0.0);
    th[0] = (p.mu - mean) / sd;
    const double pers = std::clamp(p.persistence(), 1e-6, 1.0 - 1e-6);
    th[2] = std::log(pers / (1.0 - pers));
    const std::size_t k = static_cast<std::size_t>(spec.p + spec.q);
    std::vector<double> comps;
    for (double a : p.alpha) comps.push_back(std::max(a, 1e-8));
    for (double b : p.beta) comps.push_back(std::max(b, 1e-8));
    for (std::size_t i = 1; i < k; ++i) th[2 + i] = std::log(comps[i] / comps[0]);
    th[1] = std::log(std::max(p.omega, 1e-300) / (var * (1.0 - pers)));
    if (spec.innovation == Innovation::StudentT) th[dim() - 1] = std::log(std::max(p.nu - 2.0, 1e-6));
    return th;
  }
};

inline GarchParams start_params(const GarchSpec& spec, double mean, double var, std::size_t index) {
  static constexpr double kPers[] = {0.95, 0.90, 0.98, 0.80, 0.60};
  static constexpr double kAlphaFrac[] = {0.10, 0.15, 0.05, 0.25, 0.40};
  const double pers = kPers[index % 5];
  const double a_total = pers * kAlphaFrac[index % 5];
  const double b_total = pers - a_total;
  GarchParams p;
  p.mu = mean;
  for (int i = 0; i < spec.q; ++i) p.alpha.push_back(a_total * (i == 0 ? (spec.q == 1 ? 1.0 : 0.7) : 0.3));
  for (int j = 0; j < spec.p; ++j) p.beta.push_back(b_total * (j == 0 ? (spec.p == 1 ? 1.0 : 0.7) : 0.3));
  p.omega = var * (1.0 - pers);
  if (spec.innovation == Innovation::StudentT) p.nu = 8.0;
  return p;
}

}  // namespace detail

/// Maximum likelihood by Nelder-Mead in transformed coordinates from
/// deterministic multi-starts (start 0 as tabulated, later starts jittered by
/// the seeded stream). BIC = k ln T - 2 loglik.
inline GarchFit garch_fit(std::span<const double> r, const GarchSpec& spec, std::uint64_t seed,
                          const FitOptions& opt = {}) {
  spec.validate();
  require(r.size() >= 250, ErrorKind::TooShort, "garch_fit needs at least 250 returns");
  for (double v : r) require(std::isfinite(v), ErrorKind::NonFiniteObservation, "non-finite return");
  const double var = sample_variance(r);
  if (!(var > 0.0)) throw Error(ErrorKind::OptimizationFailed, "returns have zero variance");
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  const detail::Transform tf{spec, mean, std::sqrt(var), var};

  SeededStream stream = SeededStream(seed, "garch").derive(spec.name());
  GarchFit best;
  best.spec = spec;
  best.presample_var = var;
  best.n_obs = r.size();

  auto objective = [&](const std::vector<double>& th) {
    const GarchParams p = tf.to_params(th);
    if (!(p.persistence() < 1.0) || !(p.omega > 0.0)) return std::numeric_limits<double>::infinity();
    if (spec.innovation == Innovation::StudentT && !(p.nu > 2.0)) return std::numeric_limits<double>::infinity();
    return -detail::loglik_unchecked(spec, p, r, var);
  };

  std::vector<std::vector<double>> starts;
  for (std::size_t s = 0; s < opt.n_starts; ++s) {
    auto th = tf.from_params(detail::start_params(spec, mean, var, s));
    if (s > 0) {
      for (double& v : th) v += 0.1 * stream.normal();
    }
    starts.push_back(std::move(th));
  }
  if (opt.warm_start && opt.warm_start->alpha.size() == static_cast<std::size_t>(spec.q) &&
      opt.warm_start->beta.size() == static_cast<std::size_t>(spec.p)) {
    starts.insert(starts.begin(), tf.from_params(*opt.warm_start));
  }

  optimize::NelderMeadOptions nm;
  nm.max_evals = opt.max_evals_per_start;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<double> best_th;
  for (const auto& th0 : starts) {
    const double f0 = objective(th0);
    best.start_logliks.push_back(-f0);
    auto res = optimize::nelder_mead(objective, th0, nm);
    best.evals += res.evals;
    if (res.fx < best_obj) {
      best_obj = res.fx;
      best_th = res.x;
    }
  }
  if (!std::isfinite(best_obj)) {
    throw Error(ErrorKind::OptimizationFailed, spec.name() + ": no start produced a finite likelihood");
  }
  best.params = tf.to_params(best_th);
  best.loglik = -best_obj;
  best.bic = static_cast<double>(spec.n_params()) * std::log(static_cast<double>(r.size())) - 2.0 * best.loglik;
  return best;
}

inline std::vector<GarchSpec> candidate_specs() {
  std::vector<GarchSpec> out;
  for (int p = 1; p <= 2; ++p) {
    for (int q = 1; q <= 2; ++q) {
      for (Innovation inn : {Innovation::Gaussian, Innovation::StudentT}) out.push_back({p, q, inn});
    }
  }
  return out;
}

struct SelectOptions {
  FitOptions fit;
  std::vector<GarchFit> previous;  // warm starts keyed by spec
};

struct Selection {
  GarchFit best;
  std::vector<GarchFit> candidates;
};

/// Fits all eight (p, q, innovation) combinations and keeps the minimum BIC;
/// ties go to smaller p+q, then Gaussian.
inline Selection garch_select_all(std::span<const double> r, std::uint64_t seed, const SelectOptions& opt = {}) {
  Selection sel;
  for (const auto& spec : candidate_specs()) {
    FitOptions fo = opt.fit;
    for (const auto& prev : opt.previous) {
      if (prev.spec == spec) fo.warm_start = prev.params;
    }
    sel.candidates.push_back(garch_fit(r, spec, seed, fo));
  }
  auto better = [](const GarchFit& a, const GarchFit& b) {
    if (a.bic != b.bic) return a.bic < b.bic;
    const int pa = a.spec.p + a.spec.q, pb = b.spec.p + b.spec.q;
    if (pa != pb) return pa < pb;
    return a.spec.innovation == Innovation::Gaussian && b.spec.innovation != Innovation::Gaussian;
  };
  sel.best = sel.candidates.front();
  for (const auto& c : sel.candidates) {
    if (better(c, sel.best)) sel.best = c;
  }
  return sel;
}

inline GarchFit garch_select(std::span<const double> r, std::uint64_t seed = 0, const SelectOptions& opt = {}) {
  return garch_select_all(r, seed, opt).best;
}

/// Lower `level` quantile of the unit-variance innovation.
inline double unit_variance_quantile(Innovation inn, double nu, double level) {
  require(level > 0.0 && level < 1.0, ErrorKind::Precondition, "level must be in (0,1)");
  if (inn == Innovation::Gaussian) return special::normal_quantile(level);
  require(nu > 2.0, ErrorKind::Precondition, "nu must exceed 2");
  return special::student_t_quantile(nu, level) * std::sqrt((nu - 2.0) / nu);
}

/// One-step sigma^2 after r_recent, the recursion started from the fit's
/// pre-sample variance.
inline double one_step_variance(const GarchFit& fit, std::span<const double> r_recent) {
  return conditional_variances(fit.spec, fit.params, r_recent, fit.presample_var).back();
}

/// VaR_level = mu + sigma_{T+1} * q_level.
inline double garch_var(const GarchFit& fit, std::span<const double> r_recent, double level = 0.05) {
  require(r_recent.size() >= static_cast<std::size_t>(std::max(fit.spec.p, fit.spec.q)), ErrorKind::TooShort,
          "garch_var needs at least max(p,q) recent returns");
  const double s2 = one_step_variance(fit, r_recent);
  return fit.params.mu + std::sqrt(s2) * unit_variance_quantile(fit.spec.innovation, fit.params.nu, level);
}

/// Simulated path after `burn_in` discarded steps.
inline std::vector<double> simulate(const GarchSpec& spec, const GarchParams& prm, std::size_t T, SeededStream& stream,
                                    std::size_t burn_in = 1000) {
  check_constraints(spec, prm);
  const double uncond = prm.omega / (1.0 - prm.persistence());
  std::vector<double> e2(2, uncond), s2(2, uncond);
  std::vector<double> out;
  out.reserve(T);
  const bool t_innov = spec.innovation == Innovation::StudentT;
  const double t_scale = t_innov ? std::sqrt((prm.nu - 2.0) / prm.nu) : 1.0;
  for (std::size_t t = 0; t < T + burn_in; ++t) {
    double v = prm.omega;
    for (int i = 0; i < spec.q; ++i) v += prm.alpha[static_cast<std::size_t>(i)] * e2[static_cast<std::size_t>(i)];
    for (int j = 0; j < spec.p; ++j) v += prm.beta[static_cast<std::size_t>(j)] * s2[static_cast<std::size_t>(j)];
    const double z = t_innov ? stream.student_t(prm.nu) * t_scale : stream.normal();
    const double e = std::sqrt(v) * z;
    e2[1] = e2[0];
    e2[0] = e * e;
    s2[1] = s2[0];
    s2[0] = v;
    if (t >= burn_in) out.push_back(prm.mu + e);
  }
  return out;
}

}  // namespace bayesrisk::garch
