#pragma once

#include <limits>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "bayesrisk/dates.hpp"
#include "bayesrisk/error.hpp"
#include "bayesrisk/predictive.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk::metrics {

struct ForecastRecord {
  Date date;
  PredictiveDistribution predictive;
  double actual;
};

struct ScoredCase {
  double score;
  int label;
};

// ---------------------------------------------------------------------------
// Point and probabilistic forecast scores

struct PointErrors {
  double mae = 0.0;
  double rmse = 0.0;
};

inline PointErrors mae_rmse(std::span<const ForecastRecord> records) {
  require(!records.empty(), ErrorKind::Empty, "mae_rmse needs at least one record");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const auto& r : records) {
    const double e = r.actual - r.predictive.point();
    abs_sum += std::fabs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(records.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

inline constexpr std::size_t kCrpsSamples = 4000;

/// Closed form sigma * [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)].
inline double crps_gaussian(double mean, double sd, double y) {
  const double z = (y - mean) / sd;
  return sd * (z * (2.0 * special::normal_cdf(z) - 1.0) + 2.0 * special::normal_pdf(z) -
               1.0 / std::sqrt(std::numbers::pi));
}

/// E|X - y| - 0.5 E|X - X'| over a sorted sample, all distinct pairs.
inline double crps_sorted_sample(std::span<const double> sorted, double y) {
  const std::size_t n = sorted.size();
  require(n >= 2, ErrorKind::Precondition, "sample CRPS needs >= 2 samples");
  double abs_dev = 0.0, pair = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    abs_dev += std::fabs(sorted[i] - y);
    pair += (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0) * sorted[i];
  }
  const double nd = static_cast<double>(n);
  return abs_dev / nd - pair / (nd * (nd - 1.0));
}

/// Stratified draws from the predictive (one uniform per stratum), sorted.
inline std::vector<double> stratified_sample(const PredictiveDistribution& pred, std::size_t n, SeededStream& stream) {
  std::vector<double> out;
  out.reserve(n);
  const double nd = static_cast<double>(n);
  switch (pred.kind()) {
    case PredictiveDistribution::Kind::Mixture: {
      const auto& mix = pred.as<MixtureForecast>();
      const std::size_t K = mix.weights.size();
      // Systematic allocation of strata to components, stratified normals within.
      const double offset = stream.uniform();
      std::vector<std::size_t> counts(K, 0);
      std::vector<std::size_t> owner(n);
      double cum = mix.weights[0];
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double u = (static_cast<double>(i) + offset) / nd;
        while (u > cum && k + 1 < K) cum += mix.weights[++k];
        owner[i] = k;
        ++counts[k];
      }
      std::vector<std::size_t> seen(K, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = owner[i];
        const double u = (static_cast<double>(seen[c]++) + stream.uniform()) / static_cast<double>(counts[c]);
        out.push_back(mix.components[c].mean + mix.components[c].sd * special::normal_quantile(u));
      }
      break;
    }
    case PredictiveDistribution::Kind::Empirical:
      return pred.as<EmpiricalForecast>().samples;
    default:
      for (std::size_t i = 0; i < n; ++i) out.push_back(pred.quantile((static_cast<double>(i) + stream.uniform()) / nd));
      break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// CRPS of one forecast. Gaussian uses the closed form; Student-t and
/// mixtures use 4000 stratified samples from `stream`; empirical forecasts use
/// their stored samples.
inline double crps(const PredictiveDistribution& pred, double y, SeededStream& stream) {
  switch (pred.kind()) {
    case PredictiveDistribution::Kind::Gaussian: {
      const auto& g = pred.as<GaussianForecast>();
      return crps_gaussian(g.mean, g.sd, y);
    }
    case PredictiveDistribution::Kind::Empirical:
      return crps_sorted_sample(pred.as<EmpiricalForecast>().samples, y);
    default: {
      const auto s = stratified_sample(pred, kCrpsSamples, stream);
      return crps_sorted_sample(s, y);
    }
  }
}

inline double crps(const PredictiveDistribution& pred, double y, std::uint64_t seed = 0) {
  SeededStream stream(seed, "crps");
  return crps(pred, y, stream);
}

/// Mean CRPS; record i draws from stream.derive("record", i).
inline double mean_crps(std::span<const ForecastRecord> records, std::uint64_t seed = 0) {
  require(!records.empty(), ErrorKind::Empty, "mean_crps needs at least one record");
  const SeededStream root(seed, "crps");
  double s = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    SeededStream st = root.derive("record", i);
    s += crps(records[i].predictive, records[i].actual, st);
  }
  return s / static_cast<double>(records.size());
}

/// Fraction of actuals inside the central `mass` interval (bounds inclusive).
inline double interval_coverage(std::span<const ForecastRecord> records, double mass = 0.94) {
  require(!records.empty(), ErrorKind::Empty, "interval_coverage needs at least one record");
  std::size_t inside = 0;
  for (const auto& r : records) {
    const auto [lo, hi] = r.predictive.central_interval(mass);
    if (r.actual >= lo && r.actual <= hi) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Classification

inline void require_both_classes(std::span<const ScoredCase> cases) {
  bool pos = false, neg = false;
  for (const auto& c : cases) {
    require(c.label == 0 || c.label == 1, ErrorKind::Precondition, "labels must be binary");
    (c.label == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) throw Error(ErrorKind::SingleClass, "both classes must be present");
}

/// Average ranks (1-based) with ties sharing the mean rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Area under the ROC curve, ties averaged (Mann-Whitney form of the
/// trapezoidal sweep).
inline double roc_auc(std::span<const ScoredCase> cases) {
  require_both_classes(cases);
  std::vector<double> scores;
  scores.reserve(cases.size());
  for (const auto& c : cases) scores.push_back(c.score);
  const auto ranks = average_ranks(scores);
  double rank_sum = 0.0, n_pos = 0.0, n_neg = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (cases[i].label == 1) {
      rank_sum += ranks[i];
      n_pos += 1.0;
    } else {
      n_neg += 1.0;
    }
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct RocPoint {
  double threshold;  // flag when score > threshold; the first point flags nothing
  double fpr;
  double tpr;
};

/// ROC vertices from (0,0) to (1,1), one per distinct score.
inline std::vector<RocPoint> roc_curve(std::span<const ScoredCase> cases) {
  require_both_classes(cases);
  std::vector<ScoredCase> sorted(cases.begin(), cases.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredCase& a, const ScoredCase& b) { return a.score > b.score; });
  double P = 0, N = 0;
  for (const auto& c : sorted) (c.label == 1 ? P : N) += 1.0;
  std::vector<RocPoint> out{{sorted.front().score, 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].label == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double next = j < sorted.size() ? sorted[j].score : -std::numeric_limits<double>::infinity();
    out.push_back({next, fp / N, tp / P});
    i = j;
  }
  return out;
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double fpr() const { return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn); }
};

/// Flag rule score > threshold.
inline Confusion confusion_at(std::span<const ScoredCase> cases, double threshold) {
  Confusion c;
  for (const auto& s : cases) {
    const bool flag = s.score > threshold;
    if (s.label == 1) (flag ? c.tp : c.fn)++;
    else (flag ? c.fp : c.tn)++;
  }
  return c;
}

struct ThresholdChoice {
  double precision = 0.0;
  double threshold = 1.0;
  double recall = 0.0;
  double fpr = 0.0;
};

/// Threshold with the highest recall whose FPR on `cases` stays within
/// `fpr_cap`; among thresholds with that recall, the largest one. The value
/// sits midway between the lowest flagged score and the next lower distinct
/// score, so reapplying it to the same cases reproduces the same flags.
inline ThresholdChoice precision_at_fpr(std::span<const ScoredCase> cases, double fpr_cap = 0.05) {
  require_both_classes(cases);
  require(fpr_cap >= 0.0 && fpr_cap <= 1.0, ErrorKind::Precondition, "fpr cap must be in [0,1]");
  std::vector<ScoredCase> sorted(cases.begin(), cases.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredCase& a, const ScoredCase& b) { return a.score > b.score; });
  double n_neg = 0;
  for (const auto& c : sorted) n_neg += c.label == 0;

  // Distinct score groups in descending order; flagging group g means
  // flagging every score >= its value.
  double fp = 0;
  std::size_t i = 0;
  std::size_t best_end = 0;  // one past the last flagged case
  while (i < sorted.size()) {
    std::size_t j = i;
    double fp_group = 0, tp_group = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].label == 0 ? fp_group : tp_group) += 1.0;
      ++j;
    }
    if ((fp + fp_group) / n_neg > fpr_cap + 1e-15) break;
    fp += fp_group;
    if (tp_group > 0) best_end = j;
    i = j;
  }
  double threshold;
  if (best_end == 0) {
    threshold = sorted.front().score;  // flags nothing
  } else if (best_end < sorted.size()) {
    threshold = 0.5 * (sorted[best_end - 1].score + sorted[best_end].score);
    if (!(threshold < sorted[best_end - 1].score)) threshold = sorted[best_end].score;
  } else {
    threshold = std::nextafter(sorted.back().score, -std::numeric_limits<double>::infinity());
  }
  const auto conf = confusion_at(cases, threshold);
  return {conf.precision(), threshold, conf.recall(), conf.fpr()};
}

inline double brier(std::span<const ScoredCase> cases) {
  require(!cases.empty(), ErrorKind::Empty, "brier needs at least one case");
  double s = 0.0;
  for (const auto& c : cases) {
    const double d = c.score - static_cast<double>(c.label);
    s += d * d;
  }
  return s / static_cast<double>(cases.size());
}

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;
};

/// Spearman rank correlation with the two-sided t-approximation p-value.
inline Correlation rank_corr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "rank_corr inputs differ in length");
  require(a.size() >= 10, ErrorKind::TooShort, "rank_corr needs at least 10 pairs");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, 1.0};
  const double rho = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  if (std::fabs(rho) >= 1.0) return {rho, 0.0};
  const double t = rho * std::sqrt((n - 2.0) / (1.0 - rho * rho));
  const double p = 2.0 * special::student_t_cdf(n - 2.0, -std::fabs(t));
  return {rho, std::clamp(p, 0.0, 1.0)};
}

}  // namespace bayesrisk::metrics
