#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bayesrisk/csv.hpp"
#include "bayesrisk/error.hpp"
#include "bayesrisk/harness.hpp"

// Result files: delimited tables, report.json, audit.log and SVG charts.
// Numeric cells use the shortest representation that parses back to the
// same double.
namespace bayesrisk::report {

using nlohmann::json;
namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

inline std::string num(double v) { return csv::format_double(v); }

/// Row-wise CSV builder.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : width_(header.size()) { append(header); }

  template <class... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> r{cell(cells)...};
    require(r.size() == width_, ErrorKind::Precondition, "table row width mismatch");
    append(r);
  }

  const std::string& str() const { return text_; }
  std::size_t rows() const { return rows_; }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return num(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  static std::string cell(Date d) { return d.iso(); }

  void append(const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) text_ += ',';
      text_ += r[i];
    }
    text_ += '\n';
    ++rows_;
  }

  std::size_t width_;
  std::string text_;
  std::size_t rows_ = 0;
};

// ---------------------------------------------------------------------------
// SVG line/band charts

class Chart {
 public:
  Chart(std::string title, double width = 900, double height = 360) : title_(std::move(title)), w_(width), h_(height) {}

  void band(std::vector<double> x, std::vector<double> lo, std::vector<double> hi, std::string fill) {
    series_.push_back({Kind::Band, std::move(x), std::move(lo), std::move(hi), std::move(fill), {}});
  }
  void line(std::vector<double> x, std::vector<double> y, std::string stroke, std::string label) {
    series_.push_back({Kind::Line, std::move(x), std::move(y), {}, std::move(stroke), std::move(label)});
  }

  std::string svg() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double x0 = inf, x1 = -inf, y0 = inf, y1 = -inf;
    for (const auto& s : series_) {
      for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
      for (double v : s.a) y0 = std::min(y0, v), y1 = std::max(y1, v);
      for (double v : s.b) y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
    if (x0 == inf) x0 = 0, x1 = 1;
    if (y0 == inf) y0 = 0, y1 = 1;
    if (!(x1 > x0)) x0 -= 1, x1 += 1;
    if (!(y1 > y0)) y0 -= 1, y1 += 1;
    const double ml = 60, mr = 20, mt = 30, mb = 40;
    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * (w_ - ml - mr); };
    auto py = [&](double v) { return h_ - mb - (v - y0) / (y1 - y0) * (h_ - mt - mb); };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w_) << "\" height=\"" << fmt(h_)
      << "\" viewBox=\"0 0 " << fmt(w_) << ' ' << fmt(h_) << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << fmt(ml) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title_)
      << "</text>\n";
    o << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(h_ - mb) << "\" x2=\"" << fmt(w_ - mr) << "\" y2=\""
      << fmt(h_ - mb) << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml) << "\" y2=\"" << fmt(h_ - mb)
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"5\" y=\"" << fmt(mt + 10) << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(y1)
      << "</text>\n";
    o << "<text x=\"5\" y=\"" << fmt(h_ - mb) << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(y0)
      << "</text>\n";
    double legend_y = mt + 12;
    for (const auto& s : series_) {
      if (s.x.empty()) continue;
      if (s.kind == Kind::Band) {
        o << "<polygon fill=\"" << s.style << "\" fill-opacity=\"0.35\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << fmt(px(s.x[i])) << ',' << fmt(py(s.b[i])) << ' ';
        for (std::size_t i = s.x.size(); i-- > 0;) o << fmt(px(s.x[i])) << ',' << fmt(py(s.a[i])) << (i ? " " : "");
        o << "\"/>\n";
      } else {
        o << "<polyline fill=\"none\" stroke=\"" << s.style << "\" stroke-width=\"1\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          o << fmt(px(s.x[i])) << ',' << fmt(py(s.a[i])) << (i + 1 < s.x.size() ? " " : "");
        }
        o << "\"/>\n";
        o << "<text x=\"" << fmt(w_ - mr - 150) << "\" y=\"" << fmt(legend_y) << "\" font-family=\"sans-serif\" "
          << "font-size=\"11\" fill=\"" << s.style << "\">" << escape(s.label) << "</text>\n";
        legend_y += 14;
      }
    }
    o << "</svg>\n";
    return o.str();
  }

 private:
  enum class Kind { Band, Line };
  struct Series {
    Kind kind;
    std::vector<double> x, a, b;
    std::string style;
    std::string label;
  };

  static std::string fmt(double v) { return csv::format_fixed(v, 2); }
  static std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  }

  std::string title_;
  double w_, h_;
  std::vector<Series> series_;
};

// ---------------------------------------------------------------------------
// Shared report envelope

struct Context {
  std::string experiment;
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::string data_source;
  std::size_t data_rows = 0;
  std::optional<Date> first_date, last_date;
  std::vector<std::string> warnings;
  bool charts = true;
};

inline json envelope(const Context& ctx, json results, const harness::AuditLog* audit, std::vector<std::string> files) {
  json cfg = json::object();
  for (const auto& [k, v] : ctx.config) cfg[k] = v;
  json data{{"source", ctx.data_source},
            {"rows", ctx.data_rows},
            {"first_date", ctx.first_date ? json(ctx.first_date->iso()) : json(nullptr)},
            {"last_date", ctx.last_date ? json(ctx.last_date->iso()) : json(nullptr)}};
  json aud{{"rows", 0}, {"passed", 0}, {"all_passed", true}, {"notes", json::array()}};
  if (audit) {
    aud["rows"] = audit->entries.size();
    aud["passed"] = audit->passed();
    aud["all_passed"] = audit->all_passed();
    aud["notes"] = audit->notes;
  }
  std::sort(files.begin(), files.end());
  return json{{"schema", "bayesrisk-report/1"},
              {"experiment", ctx.experiment},
              {"command", ctx.command},
              {"seed", ctx.seed},
              {"config", cfg},
              {"data", data},
              {"results", std::move(results)},
              {"audit", aud},
              {"warnings", ctx.warnings},
              {"files", files}};
}

inline std::string audit_text(const harness::AuditLog& audit) {
  std::string s;
  for (const auto& n : audit.notes) s += "note " + n + "\n";
  for (const auto& e : audit.entries) {
    s += e.model + " target=" + e.target.iso() + " max_consumed=" + e.max_consumed.iso() + " origin=" + e.origin.iso() +
         (e.ok() ? " ok\n" : " LEAK\n");
  }
  s += "summary rows=" + std::to_string(audit.entries.size()) + " passed=" + std::to_string(audit.passed()) +
       (audit.all_passed() ? " status=pass\n" : " status=fail\n");
  return s;
}

/// Writes the shared files, then report.json listing everything written.
inline void finish(const fs::path& dir, const Context& ctx, json results, const harness::AuditLog& audit,
                   std::vector<std::pair<std::string, std::string>> files) {
  files.emplace_back("audit.log", audit_text(audit));
  std::vector<std::string> names;
  for (const auto& [name, content] : files) {
    write_file(dir / name, content);
    names.push_back(name);
  }
  names.push_back("report.json");
  write_file(dir / "report.json", envelope(ctx, std::move(results), &audit, names).dump(2) + "\n");
}

inline double day_index(Date d) { return static_cast<double>(d.days()); }

inline std::string garch_fit_rows(const std::vector<harness::RefitEvent>& refits) {
  Table t({"origin", "p", "q", "dist", "mu", "omega", "alphas", "betas", "nu", "loglik", "bic"});
  for (const auto& r : refits) {
    if (!r.garch_fit) continue;
    const auto& f = *r.garch_fit;
    std::string alphas, betas;
    for (double a : f.params.alpha) alphas += (alphas.empty() ? "" : ";") + num(a);
    for (double b : f.params.beta) betas += (betas.empty() ? "" : ";") + num(b);
    const bool t_dist = f.spec.innovation == garch::Innovation::StudentT;
    t.row(r.origin, f.spec.p, f.spec.q, garch::to_string(f.spec.innovation), f.params.mu, f.params.omega, alphas, betas,
          t_dist ? num(f.params.nu) : std::string(""), f.loglik, f.bic);
  }
  return t.str();
}

// ---------------------------------------------------------------------------
// Per-experiment emitters

inline void emit_vol(const harness::VolResult& r, const fs::path& dir, const Context& ctx) {
  Table fc({"model", "date", "f_mean", "f_lo94", "f_hi94", "actual", "max_consumed", "refit_origin"});
  for (const auto& row : r.rows) fc.row(row.model, row.date, row.mean, row.lo, row.hi, row.actual, row.max_consumed, row.origin);
  Table bt({"model", "n", "mae", "rmse", "crps", "coverage94"});
  json summary = json::array();
  for (const auto& m : r.summary) {
    bt.row(m.model, m.n, m.mae, m.rmse, m.crps, m.coverage);
    summary.push_back({{"model", m.model}, {"n", m.n}, {"mae", m.mae}, {"rmse", m.rmse}, {"crps", m.crps}, {"coverage94", m.coverage}});
  }
  Table refits({"origin", "model", "ok", "detail"});
  for (const auto& e : r.refits) {
    std::string d = e.detail;
    std::replace(d.begin(), d.end(), ',', ';');
    refits.row(e.origin, e.model, e.ok, d);
  }
  Table draws({"tau", "sigma_obs"});
  for (const auto& d : r.last_draws) draws.row(d.tau, d.sigma_obs);

  std::vector<std::pair<std::string, std::string>> files{{"forecasts.csv", fc.str()},
                                                         {"backtest.csv", bt.str()},
                                                         {"refits.csv", refits.str()},
                                                         {"garch_fits.csv", garch_fit_rows(r.refits)},
                                                         {"dlm_draws.csv", draws.str()}};
  if (ctx.charts) {
    Chart chart("DLM one-step log realized volatility: forecast, actual, 94% band");
    std::vector<double> x, lo, hi, mean, actual;
    for (const auto& row : r.rows) {
      if (row.model != "dlm") continue;
      x.push_back(day_index(row.date));
      lo.push_back(row.lo);
      hi.push_back(row.hi);
      mean.push_back(row.mean);
      actual.push_back(row.actual);
    }
    chart.band(x, lo, hi, "#6fa8dc");
    chart.line(x, mean, "#1c4587", "forecast mean");
    chart.line(x, actual, "#cc0000", "actual");
    files.emplace_back("vol_forecast.svg", chart.svg());
  }
  json results{{"kind", "vol-forecast"},
               {"n_in_sample", r.n_in_sample},
               {"n_refits", r.refit_origins.size()},
               {"first_target", r.dlm.empty() ? json(nullptr) : json(r.dlm.front().date.iso())},
               {"last_target", r.dlm.empty() ? json(nullptr) : json(r.dlm.back().date.iso())},
               {"summary", summary}};
  finish(dir, ctx, std::move(results), r.audit, std::move(files));
}

inline void emit_var(const harness::VarResult& r, const fs::path& dir, const Context& ctx) {
  Table fc({"date", "return", "var_dlm", "var_garch", "hit_dlm", "hit_garch", "max_consumed"});
  for (const auto& row : r.rows) fc.row(row.date, row.ret, row.var_dlm, row.var_garch, row.hit_dlm, row.hit_garch, row.max_consumed);
  Table bt({"model", "T", "N", "p_hat", "wilson_lo", "wilson_hi", "lr_uc", "p_uc", "lr_ind", "p_ind", "lr_cc", "p_cc"});
  json reports = json::array();
  for (const auto& b : r.reports) {
    bt.row(b.model, b.T, b.N, b.p_hat, b.wilson_lo, b.wilson_hi, b.lr_uc, b.p_uc, b.lr_ind, b.p_ind, b.lr_cc, b.p_cc);
    reports.push_back({{"model", b.model}, {"T", b.T}, {"N", b.N}, {"p_hat", b.p_hat}, {"wilson_lo", b.wilson_lo},
                       {"wilson_hi", b.wilson_hi}, {"lr_uc", b.lr_uc}, {"p_uc", b.p_uc}, {"lr_ind", b.lr_ind},
                       {"p_ind", b.p_ind}, {"lr_cc", b.lr_cc}, {"p_cc", b.p_cc}});
  }
  std::vector<std::pair<std::string, std::string>> files{
      {"forecasts.csv", fc.str()}, {"backtest.csv", bt.str()}, {"garch_fits.csv", garch_fit_rows(r.refits)}};
  if (ctx.charts) {
    Chart chart("Daily log return and one-day 95% VaR");
    std::vector<double> x, ret, vd, vg;
    for (const auto& row : r.rows) {
      x.push_back(day_index(row.date));
      ret.push_back(row.ret);
      vd.push_back(row.var_dlm);
      vg.push_back(row.var_garch);
    }
    chart.line(x, ret, "#999999", "return");
    chart.line(x, vd, "#1c4587", "VaR DLM");
    chart.line(x, vg, "#cc0000", "VaR GARCH");
    files.emplace_back("var.svg", chart.svg());
  }
  json results{{"kind", "var-backtest"},
               {"n_train", r.n_train},
               {"garch_spec_final", r.garch_spec_final},
               {"dlm_init", {{"m0", r.dlm_init.m}, {"C0", r.dlm_init.C}, {"n0", r.dlm_init.n}, {"S0", r.dlm_init.S},
                             {"delta", r.dlm_init.delta}, {"beta", r.dlm_init.beta_disc}}},
               {"reports", reports}};
  finish(dir, ctx, std::move(results), r.audit, std::move(files));
}

inline void emit_fraud(const harness::FraudResult& r, const fs::path& dir, const Context& ctx) {
  Table fc({"split", "time", "score", "label", "flag"});
  for (const auto& s : r.scores) fc.row(s.split, s.time_s, s.score, s.label, s.score > r.model.policy.threshold);
  Table bt({"model", "auc", "recall_at_tau", "precision_at_tau", "fpr_at_tau", "precision_at_5fpr", "brier", "threshold"});
  bt.row(std::string("bayesian_logistic"), r.auc, r.recall_at_tau, r.precision_at_tau, r.fpr_at_tau, r.test_at_cap.precision,
         r.brier, r.model.policy.threshold);
  Table roc({"fpr", "tpr", "threshold"});
  for (const auto& p : r.roc) roc.row(p.fpr, p.tpr, p.threshold);
  std::vector<std::pair<std::string, std::string>> files{{"forecasts.csv", fc.str()},
                                                         {"backtest.csv", bt.str()},
                                                         {"roc.csv", roc.str()},
                                                         {"posterior.json", fraud::to_json(r.model).dump(2) + "\n"}};
  if (ctx.charts) {
    Chart chart("Test ROC curve");
    std::vector<double> x, y;
    for (const auto& p : r.roc) {
      x.push_back(p.fpr);
      y.push_back(p.tpr);
    }
    chart.line({0.0, 1.0}, {0.0, 1.0}, "#999999", "chance");
    chart.line(x, y, "#1c4587", "Bayesian logistic");
    files.emplace_back("roc.svg", chart.svg());
  }
  harness::AuditLog audit;
  json results{{"kind", "fraud"},
               {"n_train", r.n_train}, {"n_valid", r.n_valid}, {"n_test", r.n_test},
               {"positives", {{"train", r.pos_train}, {"valid", r.pos_valid}, {"test", r.pos_test}}},
               {"standardizer_fit_scope", r.model.standardizer.fit_scope},
               {"newton_iterations", r.newton_iterations},
               {"threshold", r.model.policy.threshold},
               {"valid_auc", r.valid_auc},
               {"test", {{"auc", r.auc}, {"recall_at_tau", r.recall_at_tau}, {"precision_at_tau", r.precision_at_tau},
                         {"fpr_at_tau", r.fpr_at_tau}, {"precision_at_5fpr", r.test_at_cap.precision},
                         {"recall_at_5fpr", r.test_at_cap.recall}, {"brier", r.brier}}}};
  finish(dir, ctx, std::move(results), audit, std::move(files));
}

inline void emit_compliance(const harness::ComplianceResult& r, const fs::path& dir, const Context& ctx) {
  Table traj({"date", "risk", "alpha_mean", "beta_mean", "ess", "y"});
  Table fc({"date", "x", "risk", "alpha_lo", "alpha_hi", "beta_lo", "beta_hi", "y", "held_out"});
  for (std::size_t t = 0; t < r.obs.size(); ++t) {
    traj.row(r.obs[t].date, r.run.risk[t], r.run.alpha_mean[t], r.run.beta_mean[t], r.run.ess[t], r.obs[t].y);
    const bool bands = t < r.run.alpha_lo.size();
    fc.row(r.obs[t].date, r.obs[t].x, r.run.risk[t], bands ? num(r.run.alpha_lo[t]) : "", bands ? num(r.run.alpha_hi[t]) : "",
           bands ? num(r.run.beta_lo[t]) : "", bands ? num(r.run.beta_hi[t]) : "", r.obs[t].y, t >= r.eval_start);
  }
  Table bt({"model", "brier", "auc"});
  json ms = json::array();
  for (const auto& m : r.metrics) {
    bt.row(m.model, m.brier, m.auc);
    ms.push_back({{"model", m.model}, {"brier", m.brier}, {"auc", m.auc}});
  }
  std::vector<std::pair<std::string, std::string>> files{
      {"compliance.csv", traj.str()}, {"forecasts.csv", fc.str()}, {"backtest.csv", bt.str()}};
  if (ctx.charts) {
    Chart chart("Filtered compliance parameters alpha_t and beta_t");
    std::vector<double> x;
    for (const auto& o : r.obs) x.push_back(day_index(o.date));
    if (r.run.alpha_lo.size() == x.size()) {
      chart.band(x, r.run.alpha_lo, r.run.alpha_hi, "#6fa8dc");
      chart.band(x, r.run.beta_lo, r.run.beta_hi, "#f6b26b");
    }
    chart.line(x, r.run.alpha_mean, "#1c4587", "alpha_t mean");
    chart.line(x, r.run.beta_mean, "#b45f06", "beta_t mean");
    files.emplace_back("compliance.svg", chart.svg());
  }
  json results{{"kind", "compliance"},
               {"n_obs", r.obs.size()},
               {"eval_start", r.eval_start},
               {"eval_first_date", r.eval_start < r.obs.size() ? json(r.obs[r.eval_start].date.iso()) : json(nullptr)},
               {"positives", {{"train", r.positives_train}, {"eval", r.positives_eval}}},
               {"covariate_scaling", {{"mean", r.scaling.mean}, {"sd", r.scaling.sd}, {"train_rows", r.scaling.train_rows}}},
               {"resample_count", r.run.resample_count},
               {"metrics", ms}};
  finish(dir, ctx, std::move(results), r.audit, std::move(files));
}

}  // namespace bayesrisk::report
