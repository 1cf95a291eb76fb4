#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace qsel {

/// Seconds since 1970-01-01 00:00:00, calendar time without zone.
using Instant = std::int64_t;

/// Parses "YYYY-MM-DD HH:MM:SS". Also accepts '/' in the date, 'T' as the
/// separator, and omitted seconds or time. Returns nullopt when malformed.
std::optional<Instant> parse_timestamp(std::string_view text);

/// Formats as "YYYY-MM-DD HH:MM:SS".
std::string format_timestamp(Instant t);

}  // namespace qsel
