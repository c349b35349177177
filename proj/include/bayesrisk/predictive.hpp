#pragma once

#include <limits>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string_view>
#include <variant>
#include <vector>

#include "bayesrisk/error.hpp"
#include "bayesrisk/rng.hpp"
#include "bayesrisk/special.hpp"

namespace bayesrisk {

struct GaussianForecast {
  double mean;
  double sd;
};

struct StudentTForecast {
  double df;
  double loc;
  double scale;
};

struct EmpiricalForecast {
  std::vector<double> samples;  // sorted ascending
};

struct MixtureForecast {
  std::vector<GaussianForecast> components;
  std::vector<double> weights;
};

/// One-step-ahead forecast density shared by every model and metric.
class PredictiveDistribution {
 public:
  enum class Kind { Gaussian, StudentT, Empirical, Mixture };

  static constexpr std::size_t kMinEmpiricalSamples = 100;

  static PredictiveDistribution gaussian(double mean, double sd) {
    require(std::isfinite(mean) && sd > 0.0 && std::isfinite(sd), ErrorKind::Precondition,
            "gaussian predictive needs finite mean and sd > 0");
    return PredictiveDistribution(GaussianForecast{mean, sd});
  }

  static PredictiveDistribution student_t(double df, double loc, double scale) {
    require(df > 0.0 && scale > 0.0 && std::isfinite(loc) && std::isfinite(scale), ErrorKind::Precondition,
            "student-t predictive needs df > 0 and scale > 0");
    return PredictiveDistribution(StudentTForecast{df, loc, scale});
  }

  static PredictiveDistribution empirical(std::vector<double> samples) {
    require(samples.size() >= kMinEmpiricalSamples, ErrorKind::Precondition,
            "empirical predictive needs at least 100 samples");
    for (double s : samples) require(std::isfinite(s), ErrorKind::Precondition, "non-finite sample");
    std::sort(samples.begin(), samples.end());
    return PredictiveDistribution(EmpiricalForecast{std::move(samples)});
  }

  static PredictiveDistribution mixture(std::vector<GaussianForecast> components, std::vector<double> weights) {
    require(!components.empty() && components.size() == weights.size(), ErrorKind::Precondition,
            "mixture needs matching non-empty components and weights");
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      require(weights[i] >= 0.0, ErrorKind::Precondition, "mixture weights must be non-negative");
      require(components[i].sd > 0.0 && std::isfinite(components[i].mean), ErrorKind::Precondition,
              "mixture component needs sd > 0");
      total += weights[i];
    }
    require(std::fabs(total - 1.0) < 1e-9, ErrorKind::Precondition, "mixture weights must sum to 1");
    return PredictiveDistribution(MixtureForecast{std::move(components), std::move(weights)});
  }

  static PredictiveDistribution equal_mixture(std::vector<GaussianForecast> components) {
    std::vector<double> w(components.size(), 1.0 / static_cast<double>(components.size()));
    return mixture(std::move(components), std::move(w));
  }

  Kind kind() const { return static_cast<Kind>(value_.index()); }

  template <class T>
  const T& as() const {
    return std::get<T>(value_);
  }

  double mean() const {
    return std::visit(
        [](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, GaussianForecast>) {
            return d.mean;
          } else if constexpr (std::is_same_v<T, StudentTForecast>) {
            return d.df > 1.0 ? d.loc : NAN;
          } else if constexpr (std::is_same_v<T, EmpiricalForecast>) {
            double s = 0.0;
            for (double x : d.samples) s += x;
            return s / static_cast<double>(d.samples.size());
          } else {
            double s = 0.0;
            for (std::size_t i = 0; i < d.components.size(); ++i) s += d.weights[i] * d.components[i].mean;
            return s;
          }
        },
        value_);
  }

  /// Centre used for point-error metrics: the mean, or the location when the
  /// mean does not exist.
  double point() const {
    if (kind() == Kind::StudentT) return as<StudentTForecast>().loc;
    return mean();
  }

  double variance() const {
    return std::visit(
        [this](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, GaussianForecast>) {
            return d.sd * d.sd;
          } else if constexpr (std::is_same_v<T, StudentTForecast>) {
            return d.df > 2.0 ? d.scale * d.scale * d.df / (d.df - 2.0) : std::numeric_limits<double>::infinity();
          } else if constexpr (std::is_same_v<T, EmpiricalForecast>) {
            const double m = mean();
            double s = 0.0;
            for (double x : d.samples) s += (x - m) * (x - m);
            return s / static_cast<double>(d.samples.size() - 1);
          } else {
            const double m = mean();
            double s = 0.0;
            for (std::size_t i = 0; i < d.components.size(); ++i) {
              const auto& c = d.components[i];
              s += d.weights[i] * (c.sd * c.sd + (c.mean - m) * (c.mean - m));
            }
            return s;
          }
        },
        value_);
  }

  double cdf(double x) const {
    return std::visit(
        [x](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, GaussianForecast>) {
            return special::normal_cdf((x - d.mean) / d.sd);
          } else if constexpr (std::is_same_v<T, StudentTForecast>) {
            return special::student_t_cdf(d.df, (x - d.loc) / d.scale);
          } else if constexpr (std::is_same_v<T, EmpiricalForecast>) {
            const auto it = std::upper_bound(d.samples.begin(), d.samples.end(), x);
            return static_cast<double>(it - d.samples.begin()) / static_cast<double>(d.samples.size());
          } else {
            double s = 0.0;
            for (std::size_t i = 0; i < d.components.size(); ++i) {
              s += d.weights[i] * special::normal_cdf((x - d.components[i].mean) / d.components[i].sd);
            }
            return s;
          }
        },
        value_);
  }

  double pdf(double x) const {
    return std::visit(
        [x](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, GaussianForecast>) {
            return special::normal_pdf((x - d.mean) / d.sd) / d.sd;
          } else if constexpr (std::is_same_v<T, StudentTForecast>) {
            return std::exp(special::student_t_logpdf(d.df, (x - d.loc) / d.scale)) / d.scale;
          } else if constexpr (std::is_same_v<T, EmpiricalForecast>) {
            return NAN;
          } else {
            double s = 0.0;
            for (std::size_t i = 0; i < d.components.size(); ++i) {
              const auto& c = d.components[i];
              s += d.weights[i] * special::normal_pdf((x - c.mean) / c.sd) / c.sd;
            }
            return s;
          }
        },
        value_);
  }

  /// Quantile at probability p in (0,1). Empirical samples use linear
  /// interpolation between order statistics; mixtures are inverted by
  /// bisection to 1e-12 absolute.
  double quantile(double p) const {
    require(p > 0.0 && p < 1.0, ErrorKind::Precondition, "quantile probability must be in (0,1)");
    return std::visit(
        [p, this](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, GaussianForecast>) {
            return d.mean + d.sd * special::normal_quantile(p);
          } else if constexpr (std::is_same_v<T, StudentTForecast>) {
            return d.loc + d.scale * special::student_t_quantile(d.df, p);
          } else if constexpr (std::is_same_v<T, EmpiricalForecast>) {
            const double h = p * static_cast<double>(d.samples.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(h));
            const auto hi = std::min(lo + 1, d.samples.size() - 1);
            return d.samples[lo] + (h - static_cast<double>(lo)) * (d.samples[hi] - d.samples[lo]);
          } else {
            double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
            const double z = std::fabs(special::normal_quantile(p)) + 1.0;
            for (const auto& c : d.components) {
              lo = std::min(lo, c.mean - z * c.sd);
              hi = std::max(hi, c.mean + z * c.sd);
            }
            for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
              const double mid = 0.5 * (lo + hi);
              if (cdf(mid) < p) lo = mid; else hi = mid;
            }
            return 0.5 * (lo + hi);
          }
        },
        value_);
  }

  std::pair<double, double> central_interval(double mass) const {
    require(mass > 0.0 && mass < 1.0, ErrorKind::Precondition, "interval mass must be in (0,1)");
    return {quantile(0.5 * (1.0 - mass)), quantile(0.5 * (1.0 + mass))};
  }

  double sample(SeededStream& stream) const {
    return std::visit(
        [&stream](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, GaussianForecast>) {
            return d.mean + d.sd * stream.normal();
          } else if constexpr (std::is_same_v<T, StudentTForecast>) {
            return d.loc + d.scale * stream.student_t(d.df);
          } else if constexpr (std::is_same_v<T, EmpiricalForecast>) {
            return d.samples[stream.below(d.samples.size())];
          } else {
            double u = stream.uniform();
            std::size_t k = 0;
            for (; k + 1 < d.weights.size(); ++k) {
              if (u < d.weights[k]) break;
              u -= d.weights[k];
            }
            return d.components[k].mean + d.components[k].sd * stream.normal();
          }
        },
        value_);
  }

  std::string_view kind_name() const {
    switch (kind()) {
      case Kind::Gaussian: return "gaussian";
      case Kind::StudentT: return "student_t";
      case Kind::Empirical: return "empirical";
      case Kind::Mixture: return "mixture";
    }
    return "unknown";
  }

 private:
  using Storage = std::variant<GaussianForecast, StudentTForecast, EmpiricalForecast, MixtureForecast>;
  explicit PredictiveDistribution(Storage v) : value_(std::move(v)) {}
  Storage value_;
};

}  // namespace bayesrisk
