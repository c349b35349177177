#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "bayesrisk/error.hpp"
#include "bayesrisk/fraud.hpp"

#if defined(__unix__) || defined(__APPLE__)
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>
#define BAYESRISK_HAVE_UNIX_SOCKETS 1
#endif

namespace bayesrisk::stream {

using nlohmann::json;

struct StreamRecord {
  json id;
  double ts = 0.0;
  std::vector<double> x;  // Time, V1..V28, Amount
  std::optional<int> y;
};

struct ParseResult {
  std::optional<StreamRecord> record;
  std::string error;
};

/// Parses `{"id":..., "ts":..., "x":[...], "y":0|1}`; y is optional.
inline ParseResult parse_record(std::string_view line, std::size_t width) {
  ParseResult out;
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    out.error = "not a JSON object";
    return out;
  }
  StreamRecord r;
  if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer())) {
    out.error = "missing id";
    return out;
  }
  r.id = j["id"];
  if (!j.contains("ts") || !j["ts"].is_number()) {
    out.error = "missing numeric ts";
    return out;
  }
  r.ts = j["ts"].get<double>();
  if (!j.contains("x") || !j["x"].is_array() || j["x"].size() != width) {
    out.error = "x must be an array of " + std::to_string(width) + " numbers";
    return out;
  }
  r.x.reserve(width);
  for (const auto& v : j["x"]) {
    if (!v.is_number()) {
      out.error = "x must hold numbers only";
      return out;
    }
    r.x.push_back(v.get<double>());
    if (!std::isfinite(r.x.back())) {
      out.error = "x holds a non-finite value";
      return out;
    }
  }
  if (r.x.back() < 0.0) {
    out.error = "Amount must be non-negative";
    return out;
  }
  if (j.contains("y") && !j["y"].is_null()) {
    if (!j["y"].is_number_integer() || (j["y"].get<int>() != 0 && j["y"].get<int>() != 1)) {
      out.error = "y must be 0 or 1";
      return out;
    }
    r.y = j["y"].get<int>();
  }
  out.record = std::move(r);
  return out;
}

struct ScoreEvent {
  json id;
  double score = 0.0;
  bool flag = false;
  std::uint64_t version = 1;
  std::int64_t lat_us = 0;
};

inline std::string format_event(const ScoreEvent& e, bool with_latency = true) {
  json j{{"id", e.id}, {"score", e.score}, {"flag", e.flag}, {"version", e.version}};
  if (with_latency) j["lat_us"] = e.lat_us;
  return j.dump();
}

struct ServeOptions {
  std::size_t batch_size = 500;
  bool background_updates = false;  // live mode; replay keeps updates synchronous for determinism
  double speedup = 0.0;              // pace on ts / speedup seconds; 0 = unpaced
  bool emit_latency = true;
  bool flush_each = false;
};

struct RunSummary {
  std::size_t lines = 0;
  std::size_t events = 0;
  std::size_t malformed = 0;
  std::size_t labeled = 0;
  std::size_t updates = 0;
  std::size_t failed_updates = 0;
  std::uint64_t final_version = 1;
  double p50_us = 0.0, p99_us = 0.0, max_us = 0.0;
  double records_per_sec = 0.0;
  double elapsed_s = 0.0;
  std::vector<std::string> errors;  // first few malformed-line / update messages
};

inline json summary_json(const RunSummary& s) {
  return json{{"lines", s.lines},
              {"events", s.events},
              {"malformed", s.malformed},
              {"labeled", s.labeled},
              {"updates", s.updates},
              {"failed_updates", s.failed_updates},
              {"update_failed", s.failed_updates > 0},
              {"final_version", s.final_version},
              {"p50_us", s.p50_us},
              {"p99_us", s.p99_us},
              {"max_us", s.max_us},
              {"records_per_sec", s.records_per_sec},
              {"elapsed_s", s.elapsed_s},
              {"errors", s.errors}};
}

/// Nearest-rank percentile of an unsorted sample.
inline double percentile(std::vector<std::int64_t> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return static_cast<double>(v[std::clamp<std::size_t>(rank, 1, v.size()) - 1]);
}

/// Scoring loop state. Labeled records are buffered; each full batch
/// produces a new posterior that replaces the current one between records.
class Server {
 public:
  using Clock = std::chrono::steady_clock;

  Server(fraud::ScoringModel model, ServeOptions opt)
      : current_(std::make_shared<const fraud::ScoringModel>(std::move(model))), opt_(opt) {
    require(opt_.batch_size >= 1, ErrorKind::Precondition, "batch size must be positive");
    require(current_->standardizer.fit_scope == "train", ErrorKind::Precondition,
            "stream scoring needs a standardizer fitted on the training partition");
    require(current_->posterior.draws.rows() > 0, ErrorKind::Precondition, "stream scoring needs posterior draws");
    started_ = Clock::now();
  }

  ~Server() {
    if (worker_.joinable()) worker_.join();
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void begin_connection() { last_ts_.reset(); }

  /// Handles one input line; returns the event text if one is emitted.
  std::optional<std::string> handle_line(std::string_view line, Clock::time_point intake) {
    ++summary_.lines;
    adopt_finished_update();
    auto parsed = parse_record(line, fraud::kRawTransactionWidth);
    if (parsed.record && last_ts_ && parsed.record->ts < *last_ts_) {
      parsed.error = "timestamp decreases";
      parsed.record.reset();
    }
    if (!parsed.record) {
      ++summary_.malformed;
      note("line " + std::to_string(summary_.lines) + ": " + parsed.error);
      return std::nullopt;
    }
    const StreamRecord& r = *parsed.record;
    last_ts_ = r.ts;
    const auto model = current_;
    ScoreEvent ev;
    ev.id = r.id;
    ev.score = model->score_raw(r.x);
    ev.flag = model->policy.flag(ev.score);
    ev.version = version_;
    if (r.y) {
      ++summary_.labeled;
      batch_x_.push_back(r.x);
      batch_y_.push_back(*r.y);
      if (batch_x_.size() >= opt_.batch_size) launch_update();
    }
    ev.lat_us = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - intake).count();
    latencies_.push_back(ev.lat_us);
    ++summary_.events;
    return format_event(ev, opt_.emit_latency);
  }

  /// Applies any partial batch, waits for pending work and fills the summary.
  RunSummary finish() {
    if (!batch_x_.empty()) launch_update();
    wait_for_update();
    RunSummary s = summary_;
    s.final_version = version_;
    s.p50_us = percentile(latencies_, 50.0);
    s.p99_us = percentile(latencies_, 99.0);
    s.max_us = latencies_.empty() ? 0.0 : static_cast<double>(*std::max_element(latencies_.begin(), latencies_.end()));
    s.elapsed_s = std::chrono::duration<double>(Clock::now() - started_).count();
    s.records_per_sec = s.elapsed_s > 0.0 ? static_cast<double>(s.events) / s.elapsed_s : 0.0;
    return s;
  }

  std::uint64_t version() const { return version_; }
  std::shared_ptr<const fraud::ScoringModel> model() const { return current_; }

 private:
  void note(std::string msg) {
    if (summary_.errors.size() < 20) summary_.errors.push_back(std::move(msg));
  }

  static std::shared_ptr<const fraud::ScoringModel> updated(const fraud::ScoringModel& base,
                                                            const std::vector<std::vector<double>>& xs,
                                                            const std::vector<int>& ys) {
    fraud::Matrix raw(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(fraud::kRawTransactionWidth));
    std::vector<double> eng(fraud::kRawTransactionWidth);
    fraud::Vector y(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      fraud::engineer_row(xs[i], eng);
      for (std::size_t j = 0; j < eng.size(); ++j) raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = eng[j];
      y[static_cast<Eigen::Index>(i)] = ys[i];
    }
    auto next = std::make_shared<fraud::ScoringModel>(base);
    next->posterior = fraud::sequential_update(base.posterior, fraud::standardize(base.standardizer, raw), y);
    return next;
  }

  void launch_update() {
    auto xs = std::move(batch_x_);
    auto ys = std::move(batch_y_);
    batch_x_.clear();
    batch_y_.clear();
    if (!opt_.background_updates) {
      apply(run_update(*current_, xs, ys));
      return;
    }
    // Bounded hand-off: at most one update in flight.
    wait_for_update();
    auto base = current_;
    worker_ = std::thread([this, base, xs = std::move(xs), ys = std::move(ys)]() {
      auto out = run_update(*base, xs, ys);
      std::lock_guard<std::mutex> lock(mu_);
      pending_ = std::move(out);
      pending_ready_ = true;
    });
  }

  struct UpdateOutcome {
    std::shared_ptr<const fraud::ScoringModel> model;
    std::string error;
  };

  static UpdateOutcome run_update(const fraud::ScoringModel& base, const std::vector<std::vector<double>>& xs,
                                  const std::vector<int>& ys) {
    try {
      return {updated(base, xs, ys), {}};
    } catch (const std::exception& e) {
      return {nullptr, e.what()};
    }
  }

  void apply(UpdateOutcome out) {
    if (out.model) {
      current_ = std::move(out.model);
      ++version_;
      ++summary_.updates;
    } else {
      ++summary_.failed_updates;
      note(std::string(to_string(ErrorKind::VersionUpdateFailed)) + ": " + out.error);
    }
  }

  void adopt_finished_update() {
    if (!opt_.background_updates) return;
    std::optional<UpdateOutcome> out;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (!pending_ready_) return;
      out = std::move(pending_);
      pending_ready_ = false;
    }
    if (worker_.joinable()) worker_.join();
    apply(std::move(*out));
  }

  void wait_for_update() {
    if (worker_.joinable()) worker_.join();
    adopt_finished_update();
  }

  std::shared_ptr<const fraud::ScoringModel> current_;
  ServeOptions opt_;
  std::uint64_t version_ = 1;
  std::optional<double> last_ts_;
  std::vector<std::vector<double>> batch_x_;
  std::vector<int> batch_y_;
  std::vector<std::int64_t> latencies_;
  RunSummary summary_;
  Clock::time_point started_;

  std::thread worker_;
  std::mutex mu_;
  UpdateOutcome pending_;
  bool pending_ready_ = false;
};

/// Set by signal handlers to end serve loops cleanly.
inline std::atomic<bool>& stop_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

namespace detail {

// Sleeps until ts is due under the pacing factor.
class Pacer {
 public:
  explicit Pacer(double speedup) : speedup_(speedup) {}
  void wait(std::string_view line) {
    if (!(speedup_ > 0.0)) return;
    const json j = json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("ts") || !j["ts"].is_number()) return;
    const double ts = j["ts"].get<double>();
    if (!started_) {
      started_ = true;
      ts0_ = ts;
      wall0_ = std::chrono::steady_clock::now();
      return;
    }
    const auto due = wall0_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>((ts - ts0_) / speedup_));
    std::this_thread::sleep_until(due);
  }

 private:
  double speedup_;
  bool started_ = false;
  double ts0_ = 0.0;
  std::chrono::steady_clock::time_point wall0_{};
};

}  // namespace detail

/// Reads lines from `in`, writes one event per well-formed line to `out`.
inline RunSummary serve(std::istream& in, std::ostream& out, fraud::ScoringModel model, const ServeOptions& opt = {}) {
  Server server(std::move(model), opt);
  detail::Pacer pacer(opt.speedup);
  std::string line;
  while (!stop_flag().load() && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pacer.wait(line);
    const auto intake = Server::Clock::now();
    if (auto ev = server.handle_line(line, intake)) {
      out << *ev << '\n';
      if (opt.flush_each) out.flush();
    }
  }
  out.flush();
  return server.finish();
}

inline RunSummary replay_file(const std::string& path, std::ostream& out, fraud::ScoringModel model,
                              ServeOptions opt = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open stream input " + path);
  opt.background_updates = false;
  return serve(in, out, std::move(model), opt);
}

#ifdef BAYESRISK_HAVE_UNIX_SOCKETS
/// Accepts connections on a Unix socket one at a time; each connection is a
/// line stream answered on the same socket. Returns when stop_flag() is set.
inline RunSummary serve_unix_socket(const std::string& path, fraud::ScoringModel model, const ServeOptions& opt = {}) {
  sockaddr_un addr{};
  require(path.size() < sizeof(addr.sun_path), ErrorKind::Precondition, "socket path too long");
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorKind::IoFailure, "cannot create socket");
  ::unlink(path.c_str());
  addr.sun_family = AF_UNIX;
  std::copy(path.begin(), path.end(), addr.sun_path);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 4) != 0) {
    ::close(fd);
    throw Error(ErrorKind::IoFailure, "cannot listen on " + path);
  }
  Server server(std::move(model), opt);
  auto wait_readable = [](int f) {
    pollfd p{f, POLLIN, 0};
    return ::poll(&p, 1, 200) > 0;
  };
  while (!stop_flag().load()) {
    if (!wait_readable(fd)) continue;
    const int c = ::accept(fd, nullptr, nullptr);
    if (c < 0) continue;
    server.begin_connection();
    std::string buf;
    char chunk[65536];
    bool open = true;
    while (open && !stop_flag().load()) {
      if (!wait_readable(c)) continue;
      const ssize_t n = ::read(c, chunk, sizeof chunk);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0, nl;
      while ((nl = buf.find('\n', start)) != std::string::npos) {
        std::string_view line(buf.data() + start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const auto intake = Server::Clock::now();
        if (auto ev = server.handle_line(line, intake)) {
          std::string msg = *ev + "\n";
          if (::write(c, msg.data(), msg.size()) < 0) {
            open = false;
            break;
          }
        }
        start = nl + 1;
      }
      buf.erase(0, start);
    }
    ::close(c);
  }
  ::close(fd);
  ::unlink(path.c_str());
  return server.finish();
}
#endif

}  // namespace bayesrisk::stream
