#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace aupt::csv {

/// Splits one CSV line (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field when it contains a comma, quote, or leading/trailing space.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

}  // namespace aupt::csv
