#pragma once

#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace bayesrisk {

/// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

  static constexpr Date from_ymd(int y, unsigned m, unsigned d) {
    // Howard Hinnant's days_from_civil.
    y -= m <= 2 ? 1 : 0;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return Date(era * 146097 + static_cast<std::int32_t>(doe) - 719468);
  }

  constexpr std::int32_t days() const { return days_; }

  struct Ymd {
    int year;
    unsigned month;
    unsigned day;
  };

  constexpr Ymd ymd() const {
    const std::int32_t z = days_ + 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {static_cast<int>(yoe) + era * 400 + (m <= 2 ? 1 : 0), m, d};
  }

  constexpr int year() const { return ymd().year; }
  constexpr unsigned month() const { return ymd().month; }

  /// Accepts `YYYY-MM-DD`, optionally followed by a time part introduced by
  /// ' ' or 'T' (which is ignored).
  static std::optional<Date> parse(std::string_view s) {
    if (s.size() < 10) return std::nullopt;
    if (s.size() > 10 && s[10] != ' ' && s[10] != 'T') return std::nullopt;
    if (s[4] != '-' || s[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len, int& out) {
      out = 0;
      for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        out = out * 10 + (s[i] - '0');
      }
      return true;
    };
    int y, m, d;
    if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    const Date date = from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
    const auto back = date.ymd();
    if (back.month != static_cast<unsigned>(m) || back.day != static_cast<unsigned>(d)) {
      return std::nullopt;
    }
    return date;
  }

  std::string iso() const {
    const auto v = ymd();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", v.year, v.month, v.day);
    return buf;
  }

  friend constexpr auto operator<=>(Date, Date) = default;
  friend constexpr bool operator==(Date, Date) = default;

 private:
  std::int32_t days_ = 0;
};

}  // namespace bayesrisk
