#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace latentprobe {

/// Shortest decimal that round-trips to the same double.
std::string format_number(double value);

/// Parses a complete decimal; nullopt on trailing garbage or empty input.
std::optional<double> parse_number(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

/// Splits one CSV record (RFC 4180 quoting) into fields.
std::vector<std::string> split_csv_line(std::string_view line);

/// Identifier safe for CSV fields and URLs: [A-Za-z0-9._:/-], non-empty.
bool is_plain_identifier(std::string_view text);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace latentprobe
