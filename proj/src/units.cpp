#include "cb/units.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <ctime>

#include "cb/error.hpp"

namespace cb {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return 1;
    case ErrorKind::validation: return 2;
    case ErrorKind::provider: return 3;
    case ErrorKind::execution: return 4;
    case ErrorKind::repository: return 5;
  }
  return 1;
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::validation: return "validation";
    case ErrorKind::provider: return "provider";
    case ErrorKind::execution: return "execution";
    case ErrorKind::repository: return "repository";
  }
  return "unknown";
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

[[noreturn]] void bad_value(std::string_view what, std::string_view text) {
  throw Error(ErrorKind::validation, "config.value",
              "invalid " + std::string(what) + " '" + std::string(text) + "'");
}

// Splits "25Kbit" into (25, "kbit").
std::pair<double, std::string> number_and_suffix(std::string_view what, std::string_view raw) {
  auto text = trim(raw);
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr == text.data() || !std::isfinite(value)) bad_value(what, raw);
  auto suffix = trim(std::string_view(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr)));
  return {value, lower(suffix)};
}

}  // namespace

Seconds parse_duration(std::string_view text, DurationUnit bare_unit) {
  auto [value, suffix] = number_and_suffix("duration", text);
  if (value < 0) bad_value("duration", text);
  double scale = 0;
  if (suffix.empty()) {
    scale = bare_unit == DurationUnit::milliseconds ? 1e-3 : 1.0;
  } else if (suffix == "s" || suffix == "sec") {
    scale = 1.0;
  } else if (suffix == "ms") {
    scale = 1e-3;
  } else if (suffix == "us") {
    scale = 1e-6;
  } else if (suffix == "m" || suffix == "min") {
    scale = 60.0;
  } else if (suffix == "h") {
    scale = 3600.0;
  } else {
    bad_value("duration", text);
  }
  return Seconds(value * scale);
}

double parse_rate(std::string_view text) {
  auto [value, suffix] = number_and_suffix("rate", text);
  for (std::string_view tail : {"/s", "ps"}) {
    if (suffix.size() > tail.size() && suffix.ends_with(tail)) {
      suffix.resize(suffix.size() - tail.size());
      break;
    }
  }
  double scale = 0;
  if (suffix.empty() || suffix == "bit") {
    scale = 1.0;
  } else if (suffix == "kbit") {
    scale = 1e3;
  } else if (suffix == "mbit") {
    scale = 1e6;
  } else if (suffix == "gbit") {
    scale = 1e9;
  } else {
    bad_value("rate", text);
  }
  return value * scale;
}

std::uint64_t parse_size(std::string_view text) {
  auto [value, suffix] = number_and_suffix("size", text);
  double scale = 0;
  if (suffix.empty() || suffix == "b") {
    scale = 1.0;
  } else if (suffix == "kb") {
    scale = 1e3;
  } else if (suffix == "mb") {
    scale = 1e6;
  } else if (suffix == "gb") {
    scale = 1e9;
  } else {
    bad_value("size", text);
  }
  double bytes = value * scale;
  if (bytes < 0 || bytes != std::floor(bytes) || bytes > 1.8e19) bad_value("size", text);
  return static_cast<std::uint64_t>(bytes);
}

double parse_fraction(std::string_view text) {
  auto [value, suffix] = number_and_suffix("fraction", text);
  if (suffix == "%") {
    value /= 100.0;
  } else if (!suffix.empty()) {
    bad_value("fraction", text);
  }
  return value;
}

bool parse_bool(std::string_view text) {
  auto t = lower(trim(text));
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  bad_value("boolean", text);
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::string format_duration(Seconds d) { return format_double(d.count()) + "s"; }

std::string format_rate(double bits_per_second) { return format_double(bits_per_second) + "bit"; }

std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace cb
