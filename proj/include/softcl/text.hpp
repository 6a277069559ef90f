#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace softcl {

/// Lowercases (Unicode root locale) and splits on whitespace.
std::vector<std::string> tokenize(std::string_view sentence);

/// NFC normalization, trim, and collapse of internal whitespace runs to a
/// single ASCII space. Used as the equality key for train/test overlap.
std::string normalize_for_matching(std::string_view text);

/// Splits on a single-character delimiter, keeping empty fields.
std::vector<std::string_view> split_fields(std::string_view line, char delim);

/// Removes ASCII whitespace at both ends.
std::string_view trim(std::string_view text);

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

/// Parses a full decimal token; returns false on trailing garbage or overflow.
bool parse_double(std::string_view text, double& out);

}  // namespace softcl
