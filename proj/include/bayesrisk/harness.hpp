#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bayesrisk/compliance.hpp"
#include "bayesrisk/config.hpp"
#include "bayesrisk/dlm.hpp"
#include "bayesrisk/fraud.hpp"
#include "bayesrisk/garch.hpp"
#include "bayesrisk/marketdata.hpp"
#include "bayesrisk/metrics.hpp"
#include "bayesrisk/varbacktest.hpp"

namespace bayesrisk::harness {

// ---------------------------------------------------------------------------
// Leakage audit

struct AuditEntry {
  std::string model;
  Date target;
  Date max_consumed;
  Date origin;  // date of the refit whose parameters produced the forecast
  bool ok() const { return max_consumed < target; }
};

struct AuditLog {
  std::vector<AuditEntry> entries;
  std::vector<std::string> notes;  // refit failures and other events, in run order

  void record(std::string model, Date target, Date max_consumed, Date origin) {
    entries.push_back({std::move(model), target, max_consumed, origin});
  }
  std::size_t passed() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.ok(); }));
  }
  bool all_passed() const { return passed() == entries.size(); }
};

struct RefitEvent {
  Date origin;
  std::string model;
  bool ok = true;
  std::string detail;  // fitted summary or the failure message
  std::optional<garch::GarchFit> garch_fit;
};

inline std::uint64_t derived_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  return SeededStream(seed, "harness").derive(label, index).next_u64();
}

// ---------------------------------------------------------------------------
// Volatility forecasting (rolling origin, monthly refits)

struct VolSettings {
  Date initial_end = Date::from_ymd(2010, 12, 31);
  std::optional<Date> vol_end;
  std::size_t rv_window = 30;
  double rv_annualization = 252.0;
  double coverage = 0.94;
  std::size_t dlm_draws = 1000;
  std::size_t dlm_forecast_draws = 250;
  dlm::ObservationNoise dlm_noise = dlm::ObservationNoise::Gaussian;
  std::size_t dlm_refit_window = 0;
  bool garch_select = true;
  garch::GarchSpec garch_spec{1, 1, garch::Innovation::StudentT};
  std::size_t garch_starts = 5;
  std::size_t garch_refit_starts = 1;
  std::size_t garch_max_evals = 3000;
  std::uint64_t seed = 42;
};

struct VolRow {
  std::string model;
  Date date;
  double mean, lo, hi, actual;
  Date max_consumed;
  Date origin;
};

struct ModelSummary {
  std::string model;
  std::size_t n = 0;
  double mae = 0, rmse = 0, crps = 0, coverage = 0;
};

struct VolResult {
  std::vector<metrics::ForecastRecord> dlm;
  std::vector<metrics::ForecastRecord> garch;
  std::vector<VolRow> rows;  // DLM rows, then GARCH rows, each in date order
  std::vector<ModelSummary> summary;
  std::vector<Date> refit_origins;
  std::vector<RefitEvent> refits;
  std::vector<dlm::DlmHyper> last_draws;  // Metropolis draws of the final refit
  AuditLog audit;
  std::size_t n_in_sample = 0;
};

namespace detail {

inline std::vector<dlm::DlmHyper> thin(const std::vector<dlm::DlmHyper>& draws, std::size_t m) {
  if (m == 0 || m >= draws.size()) return draws;
  std::vector<dlm::DlmHyper> out;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) out.push_back(draws[k * draws.size() / m]);
  return out;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ln RV implied by GARCH: 0.5 ln(ann / w * sum of w conditional variances).
inline double implied_log_rv(std::span<const double> s2, std::size_t last, std::size_t w, double ann) {
  double s = 0.0;
  for (std::size_t j = last + 1 - w; j <= last; ++j) s += s2[j];
  return 0.5 * std::log(ann / static_cast<double>(w) * s);
}

inline std::string describe(const garch::GarchFit& f) {
  std::string s = f.spec.name() + " mu=" + csv::format_double(f.params.mu) + " omega=" + csv::format_double(f.params.omega);
  for (double a : f.params.alpha) s += " alpha=" + csv::format_double(a);
  for (double b : f.params.beta) s += " beta=" + csv::format_double(b);
  if (f.spec.innovation == garch::Innovation::StudentT) s += " nu=" + csv::format_double(f.params.nu);
  s += " bic=" + csv::format_double(f.bic);
  return s;
}

}  // namespace detail

/// Refit origins: the first out-of-sample index plus the first trading day of
/// every later month.
inline std::vector<std::size_t> vol_origins(std::span<const Date> dates, Date initial_end, std::size_t first_oos,
                                            std::size_t last_target) {
  std::vector<std::size_t> out{first_oos};
  for (std::size_t b : refit_indices(dates, RollingOriginPlan{initial_end, 1, 1})) {
    if (b > first_oos && b <= last_target) out.push_back(b);
  }
  return out;
}

/// One-step forecasts of y_t = ln RV_t for every t after initial_end. The
/// model used for target t was fitted at the latest origin b <= t on
/// y[0..b-1] and then filtered through y[0..t-1].
inline VolResult run_vol_experiment(const ReturnSeries& returns, const VolSettings& s) {
  const VolSeries vol = realized_volatility(returns, s.rv_window, s.rv_annualization);
  const std::size_t w = s.rv_window;
  const auto ret_index = [w](std::size_t vol_idx) { return vol_idx + w - 1; };

  std::size_t first = 0;
  while (first < vol.size() && vol.dates[first] <= s.initial_end) ++first;
  require(first >= 250, ErrorKind::TooShort,
          "initial in-sample window has " + std::to_string(first) + " observations; at least 250 are needed");
  require(first < vol.size(), ErrorKind::SpanNotCovered, "no observations after the initial in-sample end");
  std::size_t last = vol.size() - 1;
  if (s.vol_end) {
    while (last > first && vol.dates[last] > *s.vol_end) --last;
  }
  require(vol.dates[last] > s.initial_end, ErrorKind::SpanNotCovered, "no forecast targets before vol_end");

  VolResult res;
  res.n_in_sample = first;
  const auto origins = vol_origins(vol.dates, s.initial_end, first, last);

  std::vector<dlm::DlmHyper> dlm_draws;
  std::optional<dlm::DlmHyper> dlm_start;
  std::optional<garch::GarchFit> garch_current;
  std::vector<garch::GarchFit> garch_previous;
  Date dlm_origin{}, garch_origin{};
  double garch_bias = 0.0, garch_sd = 0.0;
  std::vector<metrics::ForecastRecord> dlm_records, garch_records;
  std::vector<VolRow> dlm_rows, garch_rows;

  for (std::size_t oi = 0; oi < origins.size(); ++oi) {
    const std::size_t b = origins[oi];
    const std::size_t seg_end = oi + 1 < origins.size() ? origins[oi + 1] : last + 1;  // exclusive
    const Date origin_date = vol.dates[b];
    res.refit_origins.push_back(origin_date);
    const std::size_t fit_begin = s.dlm_refit_window > 0 && b > s.dlm_refit_window ? b - s.dlm_refit_window : 0;
    const std::span<const double> y_fit(vol.y.data() + fit_begin, b - fit_begin);

    // DLM hyperparameters by Metropolis.
    try {
      dlm::MetropolisOptions mo;
      mo.n_draws = s.dlm_draws;
      mo.seed = derived_seed(s.seed, "dlm-refit", b);
      mo.noise = s.dlm_noise;
      mo.start = dlm_start;
      const auto mr = dlm::metropolis_hyper(y_fit, mo);
      dlm_draws = mr.draws;
      std::vector<double> taus, sigs;
      for (const auto& d : mr.draws) {
        taus.push_back(d.tau);
        sigs.push_back(d.sigma_obs);
      }
      dlm_start = dlm::DlmHyper{detail::median_of(taus), detail::median_of(sigs)};
      dlm_origin = origin_date;
      res.refits.push_back({origin_date, "dlm", true,
                            "tau_median=" + csv::format_double(dlm_start->tau) +
                                " sigma_obs_median=" + csv::format_double(dlm_start->sigma_obs) +
                                " acceptance=" + csv::format_double(mr.acceptance_rate),
                            std::nullopt});
    } catch (const Error& e) {
      if (dlm_draws.empty()) throw;
      res.refits.push_back({origin_date, "dlm", false, e.what(), std::nullopt});
      res.audit.notes.push_back(origin_date.iso() + " dlm refit failed, carrying forward fit from " +
                                dlm_origin.iso() + ": " + e.what());
    }

    // GARCH on returns up to the day before the origin.
    const std::span<const double> r_fit(returns.returns.data(), ret_index(b - 1) + 1);
    try {
      garch::FitOptions fo;
      fo.n_starts = garch_current ? s.garch_refit_starts : s.garch_starts;
      fo.max_evals_per_start = s.garch_max_evals;
      const std::uint64_t gseed = derived_seed(s.seed, "garch-refit", b);
      garch::GarchFit fit;
      if (s.garch_select) {
        garch::SelectOptions so{fo, garch_previous};
        auto sel = garch::garch_select_all(r_fit, gseed, so);
        garch_previous = sel.candidates;
        fit = sel.best;
      } else {
        if (garch_current) fo.warm_start = garch_current->params;
        fit = garch::garch_fit(r_fit, s.garch_spec, gseed, fo);
      }
      // In-sample calibration of the implied log-RV forecast.
      const auto s2 = garch::conditional_variances(fit.spec, fit.params, r_fit, fit.presample_var);
      double sum = 0.0, sum2 = 0.0;
      std::size_t cnt = 0;
      for (std::size_t t = 0; t < b; ++t) {
        const double e = vol.y[t] - detail::implied_log_rv(s2, ret_index(t), w, s.rv_annualization);
        sum += e;
        sum2 += e * e;
        ++cnt;
      }
      const double mean = sum / static_cast<double>(cnt);
      const double var = (sum2 - static_cast<double>(cnt) * mean * mean) / static_cast<double>(cnt - 1);
      require(var > 0.0, ErrorKind::DegenerateVariance, "GARCH log-RV residuals have zero variance");
      garch_bias = mean;
      garch_sd = std::sqrt(var);
      garch_current = fit;
      garch_origin = origin_date;
      res.refits.push_back({origin_date, "garch", true, detail::describe(fit), fit});
    } catch (const Error& e) {
      if (!garch_current) throw;
      res.refits.push_back({origin_date, "garch", false, e.what(), std::nullopt});
      res.audit.notes.push_back(origin_date.iso() + " garch refit failed, carrying forward fit from " +
                                garch_origin.iso() + ": " + e.what());
    }

    // DLM forecasts for targets b..seg_end-1.
    {
      const auto prior = dlm::default_level_prior(y_fit);
      dlm::LocalLevelMixture mix(detail::thin(dlm_draws, s.dlm_forecast_draws), prior);
      mix.update(std::span<const double>(vol.y.data() + fit_begin, b - fit_begin));
      for (std::size_t t = b; t < seg_end; ++t) {
        auto pred = mix.predictive();
        const auto [lo, hi] = pred.central_interval(s.coverage);
        dlm_rows.push_back({"dlm", vol.dates[t], pred.mean(), lo, hi, vol.y[t], vol.dates[t - 1], dlm_origin});
        res.audit.record("dlm", vol.dates[t], vol.dates[t - 1], dlm_origin);
        dlm_records.push_back({vol.dates[t], std::move(pred), vol.y[t]});
        mix.update(vol.y[t]);
      }
    }
    // GARCH forecasts: sigma^2_j uses returns before j only, so one pass over
    // returns through the segment's last-but-one target is leakage-free.
    {
      const garch::GarchFit& fit = *garch_current;
      const std::span<const double> r_seg(returns.returns.data(), ret_index(seg_end - 1));
      const auto s2 = garch::conditional_variances(fit.spec, fit.params, r_seg, fit.presample_var);
      for (std::size_t t = b; t < seg_end; ++t) {
        const double m = detail::implied_log_rv(s2, ret_index(t), w, s.rv_annualization) + garch_bias;
        auto pred = PredictiveDistribution::gaussian(m, garch_sd);
        const auto [lo, hi] = pred.central_interval(s.coverage);
        garch_rows.push_back({"garch", vol.dates[t], m, lo, hi, vol.y[t], vol.dates[t - 1], garch_origin});
        res.audit.record("garch", vol.dates[t], vol.dates[t - 1], garch_origin);
        garch_records.push_back({vol.dates[t], std::move(pred), vol.y[t]});
      }
    }
  }

  res.last_draws = dlm_draws;
  res.dlm = std::move(dlm_records);
  res.garch = std::move(garch_records);
  res.rows = std::move(dlm_rows);
  res.rows.insert(res.rows.end(), garch_rows.begin(), garch_rows.end());
  for (const auto* set : {&res.dlm, &res.garch}) {
    ModelSummary ms;
    ms.model = set == &res.dlm ? "dlm" : "garch";
    ms.n = set->size();
    const auto pe = metrics::mae_rmse(*set);
    ms.mae = pe.mae;
    ms.rmse = pe.rmse;
    ms.crps = metrics::mean_crps(*set, derived_seed(s.seed, "crps-" + ms.model, 0));
    ms.coverage = metrics::interval_coverage(*set, s.coverage);
    res.summary.push_back(ms);
  }
  return res;
}

// ---------------------------------------------------------------------------
// VaR backtest

struct VarSettings {
  Date test_start = Date::from_ymd(2020, 1, 2);
  Date test_end = Date::from_ymd(2024, 12, 30);
  double level = 0.05;
  double delta = 0.98;
  double beta_disc = 0.98;
  double n0 = 10.0;
  bool garch_select = true;
  garch::GarchSpec garch_spec{1, 1, garch::Innovation::StudentT};
  bool garch_monthly = true;
  std::size_t garch_starts = 5;
  std::size_t garch_refit_starts = 1;
  std::size_t garch_max_evals = 3000;
  std::uint64_t seed = 42;
};

struct VarRow {
  Date date;
  double ret;
  double var_dlm, var_garch;
  int hit_dlm, hit_garch;
  Date max_consumed;
};

struct VarResult {
  std::vector<VarRow> rows;
  std::vector<backtest::VarBacktestReport> reports;  // dlm, garch
  std::vector<RefitEvent> refits;
  std::string garch_spec_final;
  dlm::DiscountDlmState dlm_init;
  AuditLog audit;
  std::size_t n_train = 0;
};

/// DLM: one discount-filter pass over the test span, initialized from the
/// training-return moments. GARCH: refit at the first trading day of each
/// test month (or once) on all returns before the origin.
inline VarResult run_var_experiment(const ReturnSeries& returns, const VarSettings& s) {
  require(s.test_start <= s.test_end, ErrorKind::Precondition, "VaR test span is reversed");
  std::size_t k0 = 0;
  while (k0 < returns.size() && returns.dates[k0] < s.test_start) ++k0;
  std::size_t k1 = k0;
  while (k1 < returns.size() && returns.dates[k1] <= s.test_end) ++k1;
  // A few calendar days of slack let the span end on a holiday or weekend.
  if (k0 < 250 || k1 == k0 || returns.dates.back().days() + 4 < s.test_end.days()) {
    throw Error(ErrorKind::SpanNotCovered, "returns (" + (returns.size() ? returns.dates.front().iso() : "none") +
                                               " .. " + (returns.size() ? returns.dates.back().iso() : "none") +
                                               ") do not cover " + s.test_start.iso() + " .. " + s.test_end.iso() +
                                               " with at least 250 earlier training returns");
  }
  VarResult res;
  res.n_train = k0;
  const std::span<const double> train(returns.returns.data(), k0);
  const std::span<const double> test(returns.returns.data() + k0, k1 - k0);

  res.dlm_init = dlm::moment_matched_init(train, s.delta, s.beta_disc, s.n0);
  const auto preds = dlm::discount_filter_run(test, res.dlm_init);

  std::vector<std::size_t> origins{k0};
  if (s.garch_monthly) {
    for (std::size_t i = k0 + 1; i < k1; ++i) {
      if (returns.dates[i].ymd().month != returns.dates[i - 1].ymd().month) origins.push_back(i);
    }
  }
  std::vector<double> var_garch(k1 - k0);
  std::optional<garch::GarchFit> current;
  std::vector<garch::GarchFit> previous;
  Date current_origin{};
  std::vector<Date> garch_origin_of(k1 - k0);
  for (std::size_t oi = 0; oi < origins.size(); ++oi) {
    const std::size_t b = origins[oi];
    const std::size_t seg_end = oi + 1 < origins.size() ? origins[oi + 1] : k1;
    const std::span<const double> r_fit(returns.returns.data(), b);
    try {
      garch::FitOptions fo;
      fo.n_starts = current ? s.garch_refit_starts : s.garch_starts;
      fo.max_evals_per_start = s.garch_max_evals;
      const std::uint64_t gseed = derived_seed(s.seed, "var-garch-refit", b);
      if (s.garch_select) {
        auto sel = garch::garch_select_all(r_fit, gseed, garch::SelectOptions{fo, previous});
        previous = sel.candidates;
        current = sel.best;
      } else {
        if (current) fo.warm_start = current->params;
        current = garch::garch_fit(r_fit, s.garch_spec, gseed, fo);
      }
      current_origin = returns.dates[b];
      res.refits.push_back({returns.dates[b], "garch", true, detail::describe(*current), current});
    } catch (const Error& e) {
      if (!current) throw;
      res.refits.push_back({returns.dates[b], "garch", false, e.what(), std::nullopt});
      res.audit.notes.push_back(returns.dates[b].iso() + " garch refit failed, carrying forward fit from " +
                                current_origin.iso() + ": " + e.what());
    }
    const auto s2 = garch::conditional_variances(current->spec, current->params,
                                                 std::span<const double>(returns.returns.data(), seg_end - 1),
                                                 current->presample_var);
    const double q = garch::unit_variance_quantile(current->spec.innovation, current->params.nu, s.level);
    for (std::size_t t = b; t < seg_end; ++t) {
      var_garch[t - k0] = current->params.mu + std::sqrt(s2[t]) * q;
      garch_origin_of[t - k0] = current_origin;
    }
  }
  res.garch_spec_final = current->spec.name();

  std::vector<int> hits_dlm, hits_garch;
  for (std::size_t t = k0; t < k1; ++t) {
    const double v_dlm = preds[t - k0].quantile(s.level);
    const double v_garch = var_garch[t - k0];
    const double r = returns.returns[t];
    VarRow row{returns.dates[t], r, v_dlm, v_garch, r < v_dlm ? 1 : 0, r < v_garch ? 1 : 0, returns.dates[t - 1]};
    hits_dlm.push_back(row.hit_dlm);
    hits_garch.push_back(row.hit_garch);
    res.audit.record("dlm", row.date, row.max_consumed, s.test_start);
    res.audit.record("garch", row.date, row.max_consumed, garch_origin_of[t - k0]);
    res.rows.push_back(row);
  }
  res.reports.push_back(backtest::backtest(hits_dlm, s.level, "dlm"));
  res.reports.push_back(backtest::backtest(hits_garch, s.level, "garch"));
  return res;
}

// ---------------------------------------------------------------------------
// Fraud classification

struct FraudSettings {
  SplitFractions split{};
  double prior_sd = 2.5;
  std::size_t n_draws = 1000;
  double fpr_cap = 0.05;
  std::uint64_t seed = 42;
};

struct FraudScore {
  std::string split;
  double time_s;
  double score;
  int label;
};

struct FraudResult {
  fraud::ScoringModel model;
  std::vector<FraudScore> scores;  // validation then test, in time order
  std::size_t n_train = 0, n_valid = 0, n_test = 0;
  std::size_t pos_train = 0, pos_valid = 0, pos_test = 0;
  double auc = 0.0;
  double recall_at_tau = 0.0;
  double precision_at_tau = 0.0;
  double fpr_at_tau = 0.0;
  metrics::ThresholdChoice test_at_cap;  // precision @ cap chosen on test itself
  double brier = 0.0;
  double valid_auc = 0.0;
  std::vector<metrics::RocPoint> roc;
  std::size_t newton_iterations = 0;
  std::vector<std::string> warnings;
};

inline FraudResult run_fraud_experiment(std::vector<TransactionRecord> records, const FraudSettings& s) {
  sort_by_time(records);
  const auto parts = chrono_split<TransactionRecord>(
      std::span<const TransactionRecord>(records), [](const TransactionRecord& r) { return r.time_s; }, s.split);
  FraudResult res;
  res.n_train = parts.train.size();
  res.n_valid = parts.valid.size();
  res.n_test = parts.test.size();
  for (const auto& r : parts.train) res.pos_train += static_cast<std::size_t>(r.label);
  for (const auto& r : parts.valid) res.pos_valid += static_cast<std::size_t>(r.label);
  for (const auto& r : parts.test) res.pos_test += static_cast<std::size_t>(r.label);

  Diagnostics diag;
  const fraud::Matrix raw_train = fraud::transaction_matrix(parts.train);
  res.model.standardizer = fraud::fit_standardizer(raw_train, fraud::transaction_feature_names(), "train", &diag);
  res.warnings = diag.warnings;
  const fraud::Matrix X_train = fraud::standardize(res.model.standardizer, raw_train);
  const fraud::Matrix X_valid = fraud::standardize(res.model.standardizer, fraud::transaction_matrix(parts.valid));
  const fraud::Matrix X_test = fraud::standardize(res.model.standardizer, fraud::transaction_matrix(parts.test));

  auto post = fraud::fit_map(X_train, fraud::transaction_labels(parts.train),
                             fraud::default_prior(static_cast<std::size_t>(X_train.cols()), s.prior_sd));
  res.newton_iterations = post.newton_iterations;
  post = fraud::sample_posterior(std::move(post), s.n_draws, s.seed);
  res.model.posterior = std::move(post);
  res.model.n_draws = s.n_draws;
  res.model.prior_sd = s.prior_sd;

  const fraud::Vector p_valid = fraud::predict_proba(res.model.posterior, X_valid);
  const fraud::Vector p_test = fraud::predict_proba(res.model.posterior, X_test);
  std::vector<double> sv(p_valid.data(), p_valid.data() + p_valid.size());
  std::vector<int> lv;
  for (const auto& r : parts.valid) lv.push_back(r.label);
  res.model.policy = fraud::tune_threshold(sv, lv, s.fpr_cap);

  std::vector<metrics::ScoredCase> valid_cases, test_cases;
  for (std::size_t i = 0; i < parts.valid.size(); ++i) {
    valid_cases.push_back({sv[i], lv[i]});
    res.scores.push_back({"valid", parts.valid[i].time_s, sv[i], lv[i]});
  }
  for (std::size_t i = 0; i < parts.test.size(); ++i) {
    const double p = p_test[static_cast<Eigen::Index>(i)];
    test_cases.push_back({p, parts.test[i].label});
    res.scores.push_back({"test", parts.test[i].time_s, p, parts.test[i].label});
  }
  res.valid_auc = metrics::roc_auc(valid_cases);
  res.auc = metrics::roc_auc(test_cases);
  const auto conf = metrics::confusion_at(test_cases, res.model.policy.threshold);
  res.recall_at_tau = conf.recall();
  res.precision_at_tau = conf.precision();
  res.fpr_at_tau = conf.fpr();
  res.test_at_cap = metrics::precision_at_fpr(test_cases, s.fpr_cap);
  res.brier = metrics::brier(test_cases);
  res.roc = metrics::roc_curve(test_cases);
  return res;
}

// ---------------------------------------------------------------------------
// Compliance risk

struct ComplianceSettings {
  std::size_t rv_window = 30;
  double rv_annualization = 252.0;
  double proxy_quantile = 0.90;
  std::size_t proxy_lookback = 252;
  double eval_fraction = 0.2;
  compliance::ComplianceModelSpec model{};
  compliance::InitPrior prior{};
  std::uint64_t seed = 42;
};

struct ComplianceMetrics {
  std::string model;
  double brier = 0.0;
  double auc = 0.5;
};

struct ComplianceResult {
  std::vector<compliance::ComplianceObs> obs;
  compliance::PfRun run;
  compliance::CovariateScaling scaling;
  std::size_t eval_start = 0;  // first held-out row
  std::vector<ComplianceMetrics> metrics;  // particle_filter, logistic, frequency
  std::size_t positives_eval = 0;
  std::size_t positives_train = 0;
  AuditLog audit;
};

inline ComplianceResult run_compliance_experiment(const ReturnSeries& returns, const ComplianceSettings& s) {
  const VolSeries vol = realized_volatility(returns, s.rv_window, s.rv_annualization);
  const auto labels = compliance::make_proxy_labels(vol, s.proxy_quantile, s.proxy_lookback);
  auto set = compliance::make_observations(vol, labels, 1.0 - s.eval_fraction);
  ComplianceResult res;
  res.obs = std::move(set.obs);
  res.scaling = set.scaling;
  res.eval_start = set.scaling.train_rows;
  res.run = compliance::pf_run(res.obs, s.model, s.prior, s.seed);
  const std::span<const compliance::ComplianceObs> all(res.obs);
  const auto train = all.first(res.eval_start);
  const auto test = all.subspan(res.eval_start);

  for (std::size_t t = 0; t < res.obs.size(); ++t) {
    // x_t is built from rv_{t-1}; the risk at t uses labels before t only.
    res.audit.record("particle_filter", res.obs[t].date, vol.dates[labels.first_index + t - 1], res.obs.front().date);
  }
  std::vector<metrics::ScoredCase> pf_cases;
  for (std::size_t t = res.eval_start; t < res.obs.size(); ++t) pf_cases.push_back({res.run.risk[t], res.obs[t].y});
  std::vector<int> train_labels;
  for (const auto& o : train) {
    train_labels.push_back(o.y);
    res.positives_train += static_cast<std::size_t>(o.y);
  }
  for (const auto& o : test) res.positives_eval += static_cast<std::size_t>(o.y);

  std::vector<metrics::ScoredCase> log_cases = compliance::baseline_logistic(train, test);
  const double prevalence = compliance::baseline_frequency(train_labels);
  std::vector<metrics::ScoredCase> freq_cases;
  for (const auto& o : test) freq_cases.push_back({prevalence, o.y});

  const bool both = res.positives_eval > 0 && res.positives_eval < test.size();
  auto summarize = [&](std::string name, const std::vector<metrics::ScoredCase>& c) {
    ComplianceMetrics m{std::move(name), metrics::brier(c), both ? metrics::roc_auc(c) : 0.5};
    if (!both) res.audit.notes.push_back("held-out labels contain a single class; AUC reported as 0.5");
    return m;
  };
  res.metrics.push_back(summarize("particle_filter", pf_cases));
  res.metrics.push_back(summarize("logistic", log_cases));
  res.metrics.push_back(summarize("frequency", freq_cases));
  return res;
}

// ---------------------------------------------------------------------------
// Settings from the key-value config

inline garch::GarchSpec parse_garch_spec(const std::string& text) {
  std::vector<std::string_view> f;
  csv::split(text, ',', f);
  if (f.size() != 3) throw Error(ErrorKind::InvalidConfig, "garch_spec must be 'p,q,gaussian|student_t'");
  garch::GarchSpec spec;
  spec.p = std::atoi(std::string(csv::trim(f[0])).c_str());
  spec.q = std::atoi(std::string(csv::trim(f[1])).c_str());
  const auto dist = csv::trim(f[2]);
  if (dist == "gaussian") spec.innovation = garch::Innovation::Gaussian;
  else if (dist == "student_t") spec.innovation = garch::Innovation::StudentT;
  else throw Error(ErrorKind::InvalidConfig, "garch_spec distribution must be gaussian or student_t");
  if (spec.p < 1 || spec.p > 2 || spec.q < 1 || spec.q > 2) {
    throw Error(ErrorKind::InvalidConfig, "garch_spec orders must be 1 or 2");
  }
  return spec;
}

inline VolSettings vol_settings(const Config& c) {
  VolSettings s;
  s.initial_end = c.date("initial_end");
  if (!c.str("vol_end").empty()) s.vol_end = c.date("vol_end");
  s.rv_window = c.count("rv_window");
  s.rv_annualization = c.real("rv_annualization");
  s.coverage = c.real("coverage");
  s.dlm_draws = c.count("dlm_draws");
  s.dlm_forecast_draws = c.count("dlm_forecast_draws");
  const auto& noise = c.str("dlm_noise");
  if (noise == "gaussian") s.dlm_noise = dlm::ObservationNoise::Gaussian;
  else if (noise == "student_t") s.dlm_noise = dlm::ObservationNoise::StudentT;
  else throw Error(ErrorKind::InvalidConfig, "dlm_noise must be gaussian or student_t");
  s.dlm_refit_window = c.count("dlm_refit_window");
  s.garch_select = c.flag("garch_select");
  s.garch_spec = parse_garch_spec(c.str("garch_spec"));
  s.garch_starts = c.count("garch_starts");
  s.garch_refit_starts = c.count("garch_refit_starts");
  s.garch_max_evals = c.count("garch_max_evals");
  s.seed = c.u64("seed");
  if (!(s.coverage > 0.0 && s.coverage < 1.0)) throw Error(ErrorKind::InvalidConfig, "coverage must be in (0,1)");
  if (s.garch_starts < 1) throw Error(ErrorKind::InvalidConfig, "garch_starts must be >= 1");
  return s;
}

inline VarSettings var_settings(const Config& c) {
  VarSettings s;
  s.test_start = c.date("var_test_start");
  s.test_end = c.date("var_test_end");
  s.level = c.real("var_level");
  s.delta = c.real("delta");
  s.beta_disc = c.real("beta_disc");
  s.n0 = c.real("dlm_n0");
  s.garch_select = c.flag("garch_select");
  s.garch_spec = parse_garch_spec(c.str("garch_spec"));
  const auto& cadence = c.str("garch_var_refit");
  if (cadence != "monthly" && cadence != "once") throw Error(ErrorKind::InvalidConfig, "garch_var_refit must be monthly or once");
  s.garch_monthly = cadence == "monthly";
  s.garch_starts = c.count("garch_starts");
  s.garch_refit_starts = c.count("garch_refit_starts");
  s.garch_max_evals = c.count("garch_max_evals");
  s.seed = c.u64("seed");
  if (!(s.level > 0.0 && s.level < 1.0)) throw Error(ErrorKind::InvalidConfig, "var_level must be in (0,1)");
  if (s.test_end < s.test_start) throw Error(ErrorKind::InvalidConfig, "var_test_end precedes var_test_start");
  return s;
}

inline FraudSettings fraud_settings(const Config& c) {
  FraudSettings s;
  s.split.train = c.real("split_train");
  s.split.valid = c.real("split_val");
  s.split.test = 1.0 - s.split.train - s.split.valid;
  if (!(s.split.train > 0 && s.split.valid > 0 && s.split.test > 1e-9)) {
    throw Error(ErrorKind::InvalidConfig, "split_train + split_val must leave a positive test share");
  }
  s.prior_sd = c.real("fraud_prior_sd");
  s.n_draws = c.count("fraud_draws");
  s.fpr_cap = c.real("fpr_cap");
  s.seed = c.u64("seed");
  return s;
}

inline ComplianceSettings compliance_settings(const Config& c) {
  ComplianceSettings s;
  s.rv_window = c.count("rv_window");
  s.rv_annualization = c.real("rv_annualization");
  s.proxy_quantile = c.real("proxy_quantile");
  s.proxy_lookback = c.count("proxy_lookback");
  s.eval_fraction = c.real("compliance_eval_fraction");
  s.model.n_particles = c.count("pf_particles");
  s.model.rw_sd_alpha = c.real("pf_rw_sd_alpha");
  s.model.rw_sd_beta = c.real("pf_rw_sd_beta");
  s.model.resample_trigger = c.real("pf_resample");
  s.seed = c.u64("seed");
  if (!(s.eval_fraction > 0.0 && s.eval_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "compliance_eval_fraction must be in (0,1)");
  }
  return s;
}

/// Price file sliced to [train_start, end] and turned into log returns.
inline ReturnSeries load_returns(const Config& c, Diagnostics* diag, std::optional<Date> end = std::nullopt) {
  const std::string& path = c.str("prices");
  if (path.empty()) throw Error(ErrorKind::InvalidConfig, "config key 'prices' is required");
  const auto prices = load_prices(path, diag);
  const Date last = end ? *end : prices.dates.back();
  return log_returns(slice(prices, c.date("train_start"), last));
}

}  // namespace bayesrisk::harness
