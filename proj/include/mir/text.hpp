#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mir {

/// Shortest decimal form that parses back to the identical double.
std::string to_decimal(double value);

/// Locale-independent parse; nullopt on malformed or trailing garbage.
std::optional<double> parse_double(std::string_view text);
std::optional<std::size_t> parse_size(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view text);

}  // namespace mir
