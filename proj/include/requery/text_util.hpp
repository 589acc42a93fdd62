#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace requery {

std::string trim(std::string_view s);

/// Replaces every occurrence of `from` in `s` with `to`.
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

/// Number of whitespace-separated tokens.
std::size_t whitespace_token_count(std::string_view s);

/// Truncates to at most `max_chars` bytes.
std::string truncate_chars(std::string_view s, std::size_t max_chars);

std::uint64_t fnv1a64(std::string_view s);
std::string fnv1a64_hex(std::string_view s);

}  // namespace requery
