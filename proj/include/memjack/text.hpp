#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace memjack {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Key normalization used for anchor/goal equality: casefold, trim, collapse
// internal whitespace runs to single spaces.
std::string normalize_key(std::string_view s);

// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim, bool keep_empty = false);
std::vector<std::string> split_lines(std::string_view s);

// Splits on '.', '!' and '?' keeping the terminator with the sentence.
std::vector<std::string> split_sentences(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);
bool starts_with_ci(std::string_view s, std::string_view prefix);

std::string hex64(uint64_t v);
std::string digest_hex(std::string_view s);

// Percent-encoding for whitespace-delimited storage records.
std::string percent_encode(std::string_view s);
std::string percent_decode(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Returns the value following "<field>:" on a line of a structured reply, or
// empty when the field is absent.
std::string field_value(std::string_view reply, std::string_view field);

}  // namespace memjack
