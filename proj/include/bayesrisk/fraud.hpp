#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bayesrisk/error.hpp"
#include "bayesrisk/marketdata.hpp"
#include "bayesrisk/metrics.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk::fraud {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Feature preparation

struct StandardizerParams {
  std::vector<std::string> names;  // kept columns only
  std::vector<std::size_t> columns;  // source column of each kept feature
  std::vector<double> means;
  std::vector<double> sds;
  std::size_t source_width = 0;
  std::string fit_scope;  // "train" once fitted on the training partition

  std::size_t width() const { return columns.size(); }
};

/// Fits per-column mean/sd; zero-variance columns are dropped with a warning.
inline StandardizerParams fit_standardizer(const Matrix& raw, const std::vector<std::string>& names,
                                           std::string fit_scope = "train", Diagnostics* diag = nullptr) {
  require(raw.rows() >= 2, ErrorKind::TooShort, "standardizer needs at least 2 rows");
  require(names.size() == static_cast<std::size_t>(raw.cols()), ErrorKind::DimensionMismatch,
          "feature names do not match column count");
  StandardizerParams p;
  p.source_width = static_cast<std::size_t>(raw.cols());
  p.fit_scope = std::move(fit_scope);
  const double n = static_cast<double>(raw.rows());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double mean = raw.col(j).mean();
    const double var = (raw.col(j).array() - mean).square().sum() / (n - 1.0);
    if (!(var > 0.0)) {
      if (diag) diag->warn("feature " + names[static_cast<std::size_t>(j)] + " has zero variance; dropped");
      continue;
    }
    p.names.push_back(names[static_cast<std::size_t>(j)]);
    p.columns.push_back(static_cast<std::size_t>(j));
    p.means.push_back(mean);
    p.sds.push_back(std::sqrt(var));
  }
  require(!p.columns.empty(), ErrorKind::DegenerateVariance, "every feature has zero variance");
  return p;
}

inline Matrix standardize(const StandardizerParams& p, const Matrix& raw) {
  require(static_cast<std::size_t>(raw.cols()) == p.source_width, ErrorKind::DimensionMismatch,
          "raw feature width differs from the fitted standardizer");
  Matrix out(raw.rows(), static_cast<Eigen::Index>(p.width()));
  for (std::size_t k = 0; k < p.width(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) =
        (raw.col(static_cast<Eigen::Index>(p.columns[k])).array() - p.means[k]) / p.sds[k];
  }
  return out;
}

inline Vector standardize_row(const StandardizerParams& p, std::span<const double> raw) {
  require(raw.size() == p.source_width, ErrorKind::DimensionMismatch,
          "raw feature width differs from the fitted standardizer");
  Vector out(static_cast<Eigen::Index>(p.width()));
  for (std::size_t k = 0; k < p.width(); ++k) {
    out[static_cast<Eigen::Index>(k)] = (raw[p.columns[k]] - p.means[k]) / p.sds[k];
  }
  return out;
}

/// Raw transaction columns: Time (seconds), V1..V28, log1p(Amount).
inline std::vector<std::string> transaction_feature_names() {
  std::vector<std::string> names{"Time"};
  for (std::size_t j = 1; j <= kTransactionFeatures; ++j) names.push_back("V" + std::to_string(j));
  names.push_back("log1p_Amount");
  return names;
}

inline constexpr std::size_t kRawTransactionWidth = kTransactionFeatures + 2;

/// Maps one `Time, V1..V28, Amount` vector onto the raw model columns.
inline void engineer_row(std::span<const double> time_features_amount, std::span<double> out) {
  require(time_features_amount.size() == kRawTransactionWidth && out.size() == kRawTransactionWidth,
          ErrorKind::DimensionMismatch, "transaction vectors need 30 values: Time, V1..V28, Amount");
  std::copy(time_features_amount.begin(), time_features_amount.end() - 1, out.begin());
  const double amount = time_features_amount.back();
  require(amount >= 0.0, ErrorKind::Precondition, "Amount must be non-negative");
  out[kRawTransactionWidth - 1] = std::log1p(amount);
}

inline Matrix transaction_matrix(std::span<const TransactionRecord> records) {
  Matrix X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(kRawTransactionWidth));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = records[i].time_s;
    for (std::size_t j = 0; j < kTransactionFeatures; ++j) {
      X(r, static_cast<Eigen::Index>(j + 1)) = records[i].features[j];
    }
    X(r, static_cast<Eigen::Index>(kRawTransactionWidth - 1)) = std::log1p(records[i].amount);
  }
  return X;
}

inline Vector transaction_labels(std::span<const TransactionRecord> records) {
  Vector y(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) y[static_cast<Eigen::Index>(i)] = records[i].label;
  return y;
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression (Laplace approximation)

/// Gaussian prior on [intercept, coefficients...].
struct GaussianPrior {
  Vector mean;
  Matrix precision;
};

inline GaussianPrior default_prior(std::size_t n_features, double prior_sd = 2.5, double intercept_sd = 10.0) {
  require(prior_sd > 0.0 && intercept_sd > 0.0, ErrorKind::Precondition, "prior scales must be positive");
  const auto d = static_cast<Eigen::Index>(n_features + 1);
  GaussianPrior p{Vector::Zero(d), Matrix::Zero(d, d)};
  p.precision(0, 0) = 1.0 / (intercept_sd * intercept_sd);
  for (Eigen::Index j = 1; j < d; ++j) p.precision(j, j) = 1.0 / (prior_sd * prior_sd);
  return p;
}

struct LogisticPosterior {
  Vector map_weights;   // [intercept, coefficients...]
  Matrix precision;     // negative Hessian of the log posterior at the MAP
  Matrix draws;         // one draw per row
  GaussianPrior prior;  // prior used for this fit
  std::size_t newton_iterations = 0;
  std::uint64_t seed = 0;

  std::size_t dim() const { return static_cast<std::size_t>(map_weights.size()); }
  std::size_t n_features() const { return dim() - 1; }
};

namespace detail {

inline Vector linear_predictor(const Matrix& X, const Vector& w) {
  Vector eta = X * w.tail(w.size() - 1);
  eta.array() += w[0];
  return eta;
}

}  // namespace detail

inline double log_posterior(const Matrix& X, const Vector& y, const GaussianPrior& prior, const Vector& w) {
  const Vector eta = detail::linear_predictor(X, w);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - special::log1p_exp(eta[i]);
  const Vector dw = w - prior.mean;
  return ll - 0.5 * dw.dot(prior.precision * dw);
}

inline Vector log_posterior_gradient(const Matrix& X, const Vector& y, const GaussianPrior& prior, const Vector& w) {
  const Vector eta = detail::linear_predictor(X, w);
  Vector resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = y[i] - special::sigmoid(eta[i]);
  Vector g(w.size());
  g[0] = resid.sum();
  g.tail(w.size() - 1) = X.transpose() * resid;
  return g - prior.precision * (w - prior.mean);
}

/// Negative Hessian: X~' diag(p(1-p)) X~ + prior precision, X~ = [1, X].
inline Matrix negative_hessian(const Matrix& X, const GaussianPrior& prior, const Vector& w) {
  const Vector eta = detail::linear_predictor(X, w);
  Vector wt(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = special::sigmoid(eta[i]);
    wt[i] = p * (1.0 - p);
  }
  const Eigen::Index d = w.size();
  Matrix H(d, d);
  H(0, 0) = wt.sum();
  const Vector xw = X.transpose() * wt;
  H.block(1, 0, d - 1, 1) = xw;
  H.block(0, 1, 1, d - 1) = xw.transpose();
  H.block(1, 1, d - 1, d - 1) = X.transpose() * wt.asDiagonal() * X;
  return H + prior.precision;
}

struct FitControl {
  double gradient_tol = 1e-8;
  std::size_t max_iterations = 100;
  int max_halvings = 50;
  bool require_both_classes = true;
};

/// MAP by damped Newton from the prior mean; stores the negative Hessian at
/// the optimum as the posterior precision.
inline LogisticPosterior fit_map(const Matrix& X, const Vector& y, const GaussianPrior& prior,
                                 const FitControl& ctl = {}) {
  require(X.rows() == y.size(), ErrorKind::DimensionMismatch, "X rows and y length differ");
  require(prior.mean.size() == X.cols() + 1 && prior.precision.rows() == X.cols() + 1 &&
              prior.precision.cols() == X.cols() + 1,
          ErrorKind::DimensionMismatch, "prior dimension must be feature count + 1");
  double n_pos = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    require(y[i] == 0.0 || y[i] == 1.0, ErrorKind::Precondition, "labels must be 0/1");
    n_pos += y[i];
  }
  if (ctl.require_both_classes && (n_pos == 0.0 || n_pos == static_cast<double>(y.size()))) {
    throw Error(ErrorKind::SingleClass, "fit_map needs at least one positive and one negative label");
  }

  LogisticPosterior post;
  post.prior = prior;
  Vector w = prior.mean;
  double f = log_posterior(X, y, prior, w);
  std::size_t it = 0;
  for (; it < ctl.max_iterations; ++it) {
    const Vector g = log_posterior_gradient(X, y, prior, w);
    if (g.norm() <= ctl.gradient_tol) break;
    const Matrix H = negative_hessian(X, prior, w);
    const Vector step = H.ldlt().solve(g);
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < ctl.max_halvings; ++h, t *= 0.5) {
      const Vector cand = w + t * step;
      const double fc = log_posterior(X, y, prior, cand);
      if (std::isfinite(fc) && fc >= f - 1e-12 * std::fabs(f)) {
        w = cand;
        f = fc;
        improved = true;
        break;
      }
    }
    if (!improved) {
      // At machine precision the line search can stall with a tiny gradient.
      if (g.norm() <= 1e-6 * std::max(1.0, std::sqrt(static_cast<double>(y.size())))) break;
      throw Error(ErrorKind::Diverged, "Newton line search failed 50 times");
    }
  }
  if (it == ctl.max_iterations) {
    const Vector g = log_posterior_gradient(X, y, prior, w);
    if (!(g.norm() <= 1e-6 * std::max(1.0, std::sqrt(static_cast<double>(y.size()))))) {
      throw Error(ErrorKind::Diverged, "Newton iterations exhausted with gradient norm " + std::to_string(g.norm()));
    }
  }
  post.map_weights = w;
  post.precision = negative_hessian(X, prior, w);
  post.newton_iterations = it;
  return post;
}

inline LogisticPosterior fit_map(const Matrix& X, const Vector& y, double prior_sd = 2.5) {
  return fit_map(X, y, default_prior(static_cast<std::size_t>(X.cols()), prior_sd));
}

/// Draws from N(map, precision^-1) via the Cholesky factor of the precision.
inline LogisticPosterior sample_posterior(LogisticPosterior post, std::size_t n_draws, std::uint64_t seed) {
  require(n_draws >= 1, ErrorKind::Precondition, "need at least one draw");
  const Eigen::LLT<Matrix> llt(post.precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "posterior precision is not PD");
  const Eigen::Index d = post.map_weights.size();
  SeededStream stream = SeededStream(seed, "fraud").derive("posterior-draws");
  Matrix Z(d, static_cast<Eigen::Index>(n_draws));
  for (Eigen::Index k = 0; k < Z.cols(); ++k) {
    for (Eigen::Index j = 0; j < d; ++j) Z(j, k) = stream.normal();
  }
  // precision = L L'  =>  L'^{-1} z ~ N(0, precision^{-1})
  const Matrix offsets = llt.matrixU().solve(Z);
  post.draws = (offsets.colwise() + post.map_weights).transpose();
  post.seed = seed;
  return post;
}

/// Posterior-predictive probability: mean over draws of sigmoid(w'x~).
inline double predict_proba(const LogisticPosterior& post, const Vector& x) {
  require(post.draws.rows() > 0, ErrorKind::Precondition, "predict_proba needs posterior draws");
  if (static_cast<std::size_t>(x.size()) != post.n_features()) {
    throw Error(ErrorKind::DimensionMismatch, "feature vector has " + std::to_string(x.size()) + " values, posterior expects " +
                                                  std::to_string(post.n_features()));
  }
  const Vector eta = post.draws.rightCols(x.size()) * x + post.draws.col(0);
  double s = 0.0;
  for (Eigen::Index k = 0; k < eta.size(); ++k) s += special::sigmoid(eta[k]);
  return s / static_cast<double>(eta.size());
}

inline Vector predict_proba(const LogisticPosterior& post, const Matrix& X) {
  require(post.draws.rows() > 0, ErrorKind::Precondition, "predict_proba needs posterior draws");
  if (static_cast<std::size_t>(X.cols()) != post.n_features()) {
    throw Error(ErrorKind::DimensionMismatch, "feature matrix width differs from the posterior");
  }
  Vector out(X.rows());
  const Eigen::Index block = 2048;
  const Matrix W = post.draws.rightCols(X.cols()).transpose();
  const Eigen::RowVectorXd b = post.draws.col(0).transpose();
  for (Eigen::Index start = 0; start < X.rows(); start += block) {
    const Eigen::Index len = std::min(block, X.rows() - start);
    Matrix eta = X.middleRows(start, len) * W;
    eta.rowwise() += b;
    for (Eigen::Index i = 0; i < len; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < eta.cols(); ++k) s += special::sigmoid(eta(i, k));
      out[start + i] = s / static_cast<double>(eta.cols());
    }
  }
  return out;
}

/// Plug-in probability at the MAP weights.
inline Vector predict_map(const LogisticPosterior& post, const Matrix& X) {
  const Vector eta = detail::linear_predictor(X, post.map_weights);
  Vector out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = special::sigmoid(eta[i]);
  return out;
}

/// Refit with the previous Gaussian approximation as the prior. A batch
/// without both classes is accepted here because the prior is informative.
/// Draws are regenerated with the previous seed when the input had them.
inline LogisticPosterior sequential_update(const LogisticPosterior& post, const Matrix& X_new, const Vector& y_new,
                                           const FitControl& ctl = {}) {
  if (static_cast<std::size_t>(X_new.cols()) != post.n_features() && X_new.rows() > 0) {
    throw Error(ErrorKind::DimensionMismatch, "new batch width differs from the posterior");
  }
  if (X_new.rows() == 0) return post;
  FitControl c = ctl;
  c.require_both_classes = false;
  LogisticPosterior next = fit_map(X_new, y_new, GaussianPrior{post.map_weights, post.precision}, c);
  next.seed = post.seed;
  if (post.draws.rows() > 0) next = sample_posterior(std::move(next), static_cast<std::size_t>(post.draws.rows()), post.seed);
  return next;
}

// ---------------------------------------------------------------------------
// Decision rule

struct DecisionPolicy {
  double threshold = 0.5;  // flag when score > threshold
  double fpr_cap = 0.05;
  bool flag(double score) const { return score > threshold; }
};

inline DecisionPolicy tune_threshold(std::span<const double> scores, std::span<const int> labels,
                                     double fpr_cap = 0.05) {
  require(scores.size() == labels.size(), ErrorKind::LengthMismatch, "scores and labels differ in length");
  std::vector<metrics::ScoredCase> cases;
  cases.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) cases.push_back({scores[i], labels[i]});
  const auto choice = metrics::precision_at_fpr(cases, fpr_cap);
  return {choice.threshold, fpr_cap};
}

// ---------------------------------------------------------------------------
// Scoring bundle and its JSON dump

/// Everything needed to score raw `Time, V1..V28, Amount` vectors.
struct ScoringModel {
  StandardizerParams standardizer;
  LogisticPosterior posterior;
  DecisionPolicy policy;
  std::size_t n_draws = 1000;
  double prior_sd = 2.5;

  double score_raw(std::span<const double> raw) const {
    std::vector<double> engineered(kRawTransactionWidth);
    engineer_row(raw, engineered);
    return predict_proba(posterior, standardize_row(standardizer, engineered));
  }
};

inline nlohmann::json to_json(const ScoringModel& m) {
  using nlohmann::json;
  const auto& post = m.posterior;
  json precision = json::array();
  for (Eigen::Index i = 0; i < post.precision.rows(); ++i) {
    for (Eigen::Index j = 0; j < post.precision.cols(); ++j) precision.push_back(post.precision(i, j));
  }
  json weights = json::array();
  for (Eigen::Index i = 0; i < post.map_weights.size(); ++i) weights.push_back(post.map_weights[i]);
  return json{
      {"map_weights", weights},
      {"precision", precision},
      {"dim", post.dim()},
      {"metadata",
       {{"seed", post.seed},
        {"n_draws", m.n_draws},
        {"prior", {{"kind", "gaussian"}, {"coef_sd", m.prior_sd}, {"intercept_sd", 10.0}}},
        {"threshold", m.policy.threshold},
        {"fpr_cap", m.policy.fpr_cap},
        {"standardizer",
         {{"fit_scope", m.standardizer.fit_scope},
          {"names", m.standardizer.names},
          {"columns", m.standardizer.columns},
          {"means", m.standardizer.means},
          {"sds", m.standardizer.sds},
          {"source_width", m.standardizer.source_width}}}}}};
}

inline ScoringModel scoring_model_from_json(const nlohmann::json& j) {
  ScoringModel m;
  try {
    const auto d = j.at("dim").get<std::size_t>();
    const auto w = j.at("map_weights").get<std::vector<double>>();
    const auto prec = j.at("precision").get<std::vector<double>>();
    require(w.size() == d && prec.size() == d * d, ErrorKind::DimensionMismatch, "posterior dump has inconsistent sizes");
    const auto& meta = j.at("metadata");
    const auto& st = meta.at("standardizer");
    m.standardizer.fit_scope = st.at("fit_scope").get<std::string>();
    m.standardizer.names = st.at("names").get<std::vector<std::string>>();
    m.standardizer.columns = st.at("columns").get<std::vector<std::size_t>>();
    m.standardizer.means = st.at("means").get<std::vector<double>>();
    m.standardizer.sds = st.at("sds").get<std::vector<double>>();
    m.standardizer.source_width = st.at("source_width").get<std::size_t>();
    m.policy.threshold = meta.at("threshold").get<double>();
    m.policy.fpr_cap = meta.at("fpr_cap").get<double>();
    m.n_draws = meta.at("n_draws").get<std::size_t>();
    m.prior_sd = meta.at("prior").at("coef_sd").get<double>();
    const auto seed = meta.at("seed").get<std::uint64_t>();
    require(m.standardizer.width() + 1 == d, ErrorKind::DimensionMismatch, "standardizer width does not match posterior");
    LogisticPosterior post;
    post.map_weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(d));
    post.precision = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        prec.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    post.prior = GaussianPrior{post.map_weights, post.precision};
    m.posterior = sample_posterior(std::move(post), m.n_draws, seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRow, std::string("posterior dump: ") + e.what());
  }
  return m;
}

}  // namespace bayesrisk::fraud
