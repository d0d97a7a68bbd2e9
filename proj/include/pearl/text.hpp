#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pearl::text {

/// Lowercase, trim, collapse internal whitespace runs to one space.
std::string normalize_label(std::string_view s);

/// normalize_label plus removal of ASCII punctuation (used to read free-form
/// model answers such as "Table.").
std::string normalize_answer(std::string_view s);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace pearl::text
