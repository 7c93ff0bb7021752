#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace truncnet::csv {

/// Splits one RFC 4180 record. Quoted fields may contain commas and doubled
/// quotes; embedded newlines are not supported.
std::vector<std::string> split(std::string_view line);

/// Quotes a field only when it needs it.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// All lines of a text file with trailing CR stripped; index i is line i+1.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace truncnet::csv
