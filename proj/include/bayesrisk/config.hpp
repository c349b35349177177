#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bayesrisk/csv.hpp"
#include "bayesrisk/dates.hpp"
#include "bayesrisk/error.hpp"

namespace bayesrisk {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

// The full schema. Values are plain strings until read through a typed getter.
inline constexpr ConfigKey kConfigSchema[] = {
    {"experiment", "", "output subdirectory name; defaults to the subcommand"},
    {"seed", "42", "root seed for every stochastic step"},
    {"out_dir", "out", "output root; results go to <out_dir>/<experiment>/"},
    {"prices", "", "price file with header date,close"},
    {"transactions", "", "transaction file Time,V1..V28,Amount,Class"},
    {"train_start", "2000-01-03", "first price date used"},
    {"initial_end", "2010-12-31", "end of the initial in-sample window (volatility)"},
    {"vol_end", "", "last date forecast in the volatility run; empty = end of data"},
    {"var_test_start", "2020-01-02", "first VaR backtest date"},
    {"var_test_end", "2024-12-30", "last VaR backtest date"},
    {"rv_window", "30", "realized-volatility window (trading days)"},
    {"rv_annualization", "252", "realized-volatility annualization factor"},
    {"coverage", "0.94", "central predictive interval mass"},
    {"dlm_draws", "1000", "Metropolis draws kept per refit"},
    {"dlm_forecast_draws", "250", "draws (evenly thinned) used in the forecast mixture"},
    {"dlm_noise", "gaussian", "observation noise for the volatility DLM: gaussian | student_t"},
    {"dlm_refit_window", "0", "refit-window length in observations; 0 = expanding"},
    {"garch_select", "true", "BIC selection over the 8 candidate specs at each refit"},
    {"garch_spec", "1,1,student_t", "spec used when garch_select = false"},
    {"garch_starts", "5", "multi-starts for the first GARCH fit"},
    {"garch_refit_starts", "1", "multi-starts at later refits (warm start added)"},
    {"garch_max_evals", "3000", "simplex evaluations per start"},
    {"garch_var_refit", "monthly", "GARCH refit cadence in the VaR run: monthly | once"},
    {"var_level", "0.05", "VaR tail probability"},
    {"delta", "0.98", "state discount factor"},
    {"beta_disc", "0.98", "variance-learning discount factor"},
    {"dlm_n0", "10", "initial degrees of freedom for the discount filter"},
    {"fraud_prior_sd", "2.5", "prior sd of standardized logistic coefficients"},
    {"fraud_draws", "1000", "Laplace posterior draws"},
    {"fpr_cap", "0.05", "false-positive-rate cap for threshold tuning"},
    {"split_train", "0.70", "chronological train fraction"},
    {"split_val", "0.15", "chronological validation fraction"},
    {"pf_particles", "5000", "particle count"},
    {"pf_rw_sd_alpha", "0.02", "random-walk sd of alpha"},
    {"pf_rw_sd_beta", "0.02", "random-walk sd of beta"},
    {"pf_resample", "0.5", "resample when ESS < this fraction of particles"},
    {"proxy_quantile", "0.90", "proxy-label volatility quantile"},
    {"proxy_lookback", "252", "proxy-label strictly-past window"},
    {"compliance_eval_fraction", "0.2", "final share of the timeline held out for metrics"},
    {"stream_input", "", "NDJSON input for the stream subcommand; empty = standard input"},
    {"stream_model", "", "posterior.json produced by the fraud subcommand"},
    {"stream_batch", "500", "labeled records per sequential posterior update"},
    {"stream_speedup", "0", "replay pacing factor on ts; 0 = unpaced"},
    {"stream_socket", "", "optional Unix socket path to serve on instead of stdin/stdout"},
    {"charts", "true", "emit SVG charts"},
};

class Config {
 public:
  Config() {
    for (const auto& k : kConfigSchema) values_[std::string(k.name)] = std::string(k.default_value);
  }

  static bool known(std::string_view key) {
    for (const auto& k : kConfigSchema) {
      if (k.name == key) return true;
    }
    return false;
  }

  static std::string valid_keys() {
    std::string s;
    for (const auto& k : kConfigSchema) {
      if (!s.empty()) s += ", ";
      s += k.name;
    }
    return s;
  }

  void set(std::string_view key, std::string_view value) {
    if (!known(key)) {
      throw Error(ErrorKind::UnknownKey, "unknown config key '" + std::string(key) + "'; valid keys: " + valid_keys());
    }
    values_[std::string(key)] = std::string(value);
  }

  /// `key=value` as given on the command line.
  void set_override(std::string_view kv) {
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidConfig, "override '" + std::string(kv) + "' is not key=value");
    }
    set(csv::trim(kv.substr(0, eq)), csv::unquote(csv::trim(kv.substr(eq + 1))));
  }

  /// Lines are `key = value`; `#` starts a comment; values may be double-quoted.
  void parse(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view v = line;
      bool quoted = false;
      std::size_t cut = v.size();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] == '"') quoted = !quoted;
        if (v[i] == '#' && !quoted) {
          cut = i;
          break;
        }
      }
      v = csv::trim(v.substr(0, cut));
      if (v.empty()) continue;
      const auto eq = v.find('=');
      if (eq == std::string_view::npos) {
        throw Error(ErrorKind::InvalidConfig, source + ":" + std::to_string(line_no) + ": expected key = value");
      }
      const auto key = csv::trim(v.substr(0, eq));
      if (!known(key)) {
        throw Error(ErrorKind::UnknownKey, source + ":" + std::to_string(line_no) + ": unknown config key '" +
                                               std::string(key) + "'; valid keys: " + valid_keys());
      }
      set(key, csv::unquote(csv::trim(v.substr(eq + 1))));
    }
  }

  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open config file " + path);
    parse(in, path);
  }

  const std::string& str(std::string_view key) const {
    const auto it = values_.find(std::string(key));
    if (it == values_.end()) throw Error(ErrorKind::UnknownKey, "unknown config key '" + std::string(key) + "'");
    return it->second;
  }

  double real(std::string_view key) const {
    const auto v = csv::parse_double(str(key));
    if (!v) throw Error(ErrorKind::InvalidConfig, std::string(key) + " must be a number, got '" + str(key) + "'");
    return *v;
  }

  std::uint64_t u64(std::string_view key) const {
    const std::string& s = str(key);
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw Error(ErrorKind::InvalidConfig, std::string(key) + " must be a non-negative integer, got '" + s + "'");
    }
    return out;
  }

  std::size_t count(std::string_view key) const { return static_cast<std::size_t>(u64(key)); }

  bool flag(std::string_view key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error(ErrorKind::InvalidConfig, std::string(key) + " must be true or false, got '" + s + "'");
  }

  Date date(std::string_view key) const {
    const auto d = Date::parse(str(key));
    if (!d) throw Error(ErrorKind::InvalidConfig, std::string(key) + " must be an ISO date, got '" + str(key) + "'");
    return *d;
  }

  /// All values in schema order, for echoing into report metadata.
  std::vector<std::pair<std::string, std::string>> entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : kConfigSchema) out.emplace_back(std::string(k.name), str(k.name));
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace bayesrisk
