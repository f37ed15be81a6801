#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace cb {

using Seconds = std::chrono::duration<double>;

// Unit used when a duration string carries no suffix.
enum class DurationUnit { seconds, milliseconds };

// Accepts "150ms", "30s", "2m", "1h", "250us" or a bare number in
// `bare_unit`. Negative values are rejected.
Seconds parse_duration(std::string_view text, DurationUnit bare_unit);

// Bandwidth with decimal suffixes: bit, Kbit, Mbit, Gbit (case-insensitive,
// optional "ps" or "/s"). A bare number is bits per second.
double parse_rate(std::string_view text);

// Byte count with decimal suffixes B, kB, MB, GB.
std::uint64_t parse_size(std::string_view text);

// Fraction in [0, 1]; accepts "0.05" or "5%".
double parse_fraction(std::string_view text);

bool parse_bool(std::string_view text);

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

std::string format_duration(Seconds d);  // e.g. "0.075s"
std::string format_rate(double bits_per_second);  // e.g. "25000bit"

// Wall clock, ISO 8601 UTC with second resolution.
std::string utc_timestamp();

}  // namespace cb
