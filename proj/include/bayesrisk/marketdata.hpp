#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bayesrisk/csv.hpp"
#include "bayesrisk/dates.hpp"
#include "bayesrisk/error.hpp"

namespace bayesrisk {

/// Non-fatal findings collected during ingestion.
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

struct PriceSeries {
  std::vector<Date> dates;
  std::vector<double> closes;
  std::size_t size() const { return dates.size(); }
};

struct ReturnSeries {
  std::vector<Date> dates;  // later date of each price pair
  std::vector<double> returns;
  std::size_t size() const { return dates.size(); }
};

struct VolSeries {
  std::vector<Date> dates;
  std::vector<double> rv;  // annualized realized volatility
  std::vector<double> y;   // ln(rv)
  std::size_t size() const { return dates.size(); }
};

inline constexpr std::size_t kTransactionFeatures = 28;

struct TransactionRecord {
  double time_s = 0.0;
  std::array<double, kTransactionFeatures> features{};
  double amount = 0.0;
  int label = 0;
};

// ---------------------------------------------------------------------------
// Prices

/// Parses a `date,close` file. Rows must be in increasing date order;
/// repeated dates keep the first row and add a warning.
inline PriceSeries parse_prices(std::istream& in, const std::string& source,
                                Diagnostics* diag = nullptr) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  PriceSeries out;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    csv::split(line, ',', fields);
    if (!have_header) {
      if (fields.size() != 2) {
        throw Error(ErrorKind::MalformedRow, source + ":" + std::to_string(line_no) +
                                                 ": expected header `date,close`");
      }
      std::string h0(fields[0]), h1(fields[1]);
      std::transform(h0.begin(), h0.end(), h0.begin(), ::tolower);
      std::transform(h1.begin(), h1.end(), h1.begin(), ::tolower);
      if (h0 != "date" || h1 != "close") {
        throw Error(ErrorKind::MalformedRow, source + ":" + std::to_string(line_no) +
                                                 ": expected header `date,close`");
      }
      have_header = true;
      continue;
    }
    const auto where = source + ":" + std::to_string(line_no);
    if (fields.size() != 2) throw Error(ErrorKind::MalformedRow, where + ": expected 2 fields");
    const auto date = Date::parse(fields[0]);
    if (!date) throw Error(ErrorKind::MalformedRow, where + ": bad date `" + std::string(fields[0]) + "`");
    const auto close = csv::parse_double(fields[1]);
    if (!close) throw Error(ErrorKind::MalformedRow, where + ": bad close `" + std::string(fields[1]) + "`");
    if (*close <= 0.0) throw Error(ErrorKind::MalformedRow, where + ": close must be positive");
    if (!out.dates.empty()) {
      if (*date == out.dates.back()) {
        if (diag) diag->warn(where + ": duplicate date " + date->iso() + " dropped (first kept)");
        continue;
      }
      if (*date < out.dates.back()) {
        throw Error(ErrorKind::NonMonotoneDates,
                    where + ": " + date->iso() + " precedes " + out.dates.back().iso());
      }
    }
    out.dates.push_back(*date);
    out.closes.push_back(*close);
  }
  if (out.dates.empty()) throw Error(ErrorKind::EmptyFile, source + ": no price rows");
  return out;
}

inline PriceSeries load_prices(const std::string& path, Diagnostics* diag = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open price file " + path);
  return parse_prices(in, path, diag);
}

/// Rows with first <= date <= last.
inline PriceSeries slice(const PriceSeries& p, Date first, Date last) {
  PriceSeries out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.dates[i] >= first && p.dates[i] <= last) {
      out.dates.push_back(p.dates[i]);
      out.closes.push_back(p.closes[i]);
    }
  }
  return out;
}

inline ReturnSeries log_returns(const PriceSeries& p) {
  require(p.size() >= 2, ErrorKind::TooShort, "log_returns needs at least 2 prices");
  ReturnSeries r;
  r.dates.reserve(p.size() - 1);
  r.returns.reserve(p.size() - 1);
  for (std::size_t i = 1; i < p.size(); ++i) {
    r.dates.push_back(p.dates[i]);
    r.returns.push_back(std::log(p.closes[i] / p.closes[i - 1]));
  }
  return r;
}

/// RV_t = sqrt((annualization / window) * sum of the last `window` squared
/// returns), y_t = ln RV_t. Windows run over the rows as given (trading
/// days only).
inline VolSeries realized_volatility(const ReturnSeries& r, std::size_t window = 30,
                                     double annualization = 252.0) {
  require(window >= 1, ErrorKind::Precondition, "window must be positive");
  require(r.size() >= window, ErrorKind::TooShort,
          "realized_volatility needs at least " + std::to_string(window) + " returns");
  VolSeries v;
  const std::size_t n = r.size() - window + 1;
  v.dates.reserve(n);
  v.rv.reserve(n);
  v.y.reserve(n);
  const double scale = annualization / static_cast<double>(window);
  for (std::size_t t = window - 1; t < r.size(); ++t) {
    // Summed fresh per window so every value depends only on its own rows.
    double ss = 0.0;
    for (std::size_t i = t + 1 - window; i <= t; ++i) ss += r.returns[i] * r.returns[i];
    if (ss == 0.0) {
      throw Error(ErrorKind::AllZeroWindow, "all returns zero in window ending " + r.dates[t].iso());
    }
    const double rv = std::sqrt(scale * ss);
    v.dates.push_back(r.dates[t]);
    v.rv.push_back(rv);
    v.y.push_back(std::log(rv));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Temporal splits

template <class T>
struct ChronoSplit {
  std::vector<T> train;
  std::vector<T> valid;
  std::vector<T> test;
};

struct SplitFractions {
  double train = 0.70;
  double valid = 0.15;
  double test = 0.15;
};

/// Partition sizes: floor(f*n) for train and valid, test takes the rest.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, SplitFractions f = {}) {
  require(f.train > 0 && f.valid >= 0 && f.test >= 0, ErrorKind::Precondition,
          "split fractions must be non-negative");
  require(std::fabs(f.train + f.valid + f.test - 1.0) < 1e-9, ErrorKind::Precondition,
          "split fractions must sum to 1");
  const auto nd = static_cast<double>(n);
  const auto n_train = static_cast<std::size_t>(std::floor(f.train * nd + 1e-9));
  const auto n_valid = static_cast<std::size_t>(std::floor(f.valid * nd + 1e-9));
  return {n_train, n_valid, n - n_train - n_valid};
}

/// Contiguous, order-preserving partition of time-sorted records.
template <class T, class TimeKey>
ChronoSplit<T> chrono_split(std::span<const T> records, TimeKey time_of, SplitFractions f = {}) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (time_of(records[i]) < time_of(records[i - 1])) {
      throw Error(ErrorKind::Unsorted, "records not sorted by time at index " + std::to_string(i));
    }
  }
  const auto sizes = split_sizes(records.size(), f);
  if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) {
    throw Error(ErrorKind::EmptyPartition, "split of " + std::to_string(records.size()) +
                                               " records leaves an empty partition");
  }
  ChronoSplit<T> out;
  auto it = records.begin();
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  out.valid.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  out.test.assign(it, records.end());
  return out;
}

// ---------------------------------------------------------------------------
// Rolling origin

struct RollingOriginPlan {
  Date initial_end;
  int refit_interval_months = 1;
  int horizon = 1;
};

/// Indices of refit origins: the first trading day of every
/// `refit_interval_months`-th calendar month strictly after initial_end.
inline std::vector<std::size_t> refit_indices(std::span<const Date> dates, const RollingOriginPlan& plan) {
  require(plan.refit_interval_months >= 1, ErrorKind::Precondition, "refit interval must be >= 1 month");
  require(plan.horizon == 1, ErrorKind::Precondition, "only one-step horizons are supported");
  std::vector<std::size_t> out;
  const auto base = plan.initial_end.ymd();
  const int base_month = base.year * 12 + static_cast<int>(base.month) - 1;
  for (std::size_t i = 0; i < dates.size(); ++i) {
    if (dates[i] <= plan.initial_end) continue;
    const auto ymd = dates[i].ymd();
    const int month_index = ymd.year * 12 + static_cast<int>(ymd.month) - 1;
    const bool first_of_month =
        i == 0 || dates[i - 1].ymd().month != ymd.month || dates[i - 1].ymd().year != ymd.year;
    if (!first_of_month) continue;
    if ((month_index - base_month) % plan.refit_interval_months == 0) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transactions

/// Parses the public fraud-dataset layout `Time,V1..V28,Amount,Class`
/// (quoted or unquoted fields).
inline std::vector<TransactionRecord> parse_transactions(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  std::vector<TransactionRecord> out;
  bool have_header = false;
  constexpr std::size_t kColumns = kTransactionFeatures + 3;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    csv::split(line, ',', fields);
    const auto where = source + ":" + std::to_string(line_no);
    if (!have_header) {
      bool ok = fields.size() == kColumns && fields[0] == "Time" && fields[kColumns - 2] == "Amount" &&
                fields[kColumns - 1] == "Class";
      for (std::size_t j = 1; ok && j <= kTransactionFeatures; ++j) ok = fields[j] == "V" + std::to_string(j);
      if (!ok) throw Error(ErrorKind::MalformedRow, where + ": expected header Time,V1..V28,Amount,Class");
      have_header = true;
      continue;
    }
    if (fields.size() != kColumns) throw Error(ErrorKind::MalformedRow, where + ": expected 31 fields");
    TransactionRecord rec;
    auto num = [&](std::size_t j) {
      const auto v = csv::parse_double(fields[j]);
      if (!v) throw Error(ErrorKind::MalformedRow, where + ": bad number in column " + std::to_string(j + 1));
      return *v;
    };
    rec.time_s = num(0);
    for (std::size_t j = 0; j < kTransactionFeatures; ++j) rec.features[j] = num(j + 1);
    rec.amount = num(kColumns - 2);
    const double label = num(kColumns - 1);
    if (rec.time_s < 0.0 || rec.amount < 0.0) throw Error(ErrorKind::MalformedRow, where + ": negative Time/Amount");
    if (label != 0.0 && label != 1.0) throw Error(ErrorKind::MalformedRow, where + ": Class must be 0 or 1");
    rec.label = static_cast<int>(label);
    out.push_back(rec);
  }
  if (out.empty()) throw Error(ErrorKind::EmptyFile, source + ": no transaction rows");
  return out;
}

inline std::vector<TransactionRecord> load_transactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open transaction file " + path);
  return parse_transactions(in, path);
}

/// Stable sort by Time (the public file is already ordered).
inline void sort_by_time(std::vector<TransactionRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const TransactionRecord& a, const TransactionRecord& b) { return a.time_s < b.time_s; });
}

}  // namespace bayesrisk
