// SPDX-License-Identifier: Apache-2.0
#include "seekqa/text.hpp"

#include <algorithm>
#include <array>

namespace seekqa::text {

namespace {

// Sorted for binary search. Keep in sync with kStopwordListVersion.
constexpr auto kStopwords = std::to_array<std::string_view>({
    "a",    "about", "an",    "and",   "are",   "as",    "at",    "be",   "been",
    "but",  "by",    "can",   "could", "did",   "do",    "does",  "for",  "from",
    "had",  "has",   "have",  "he",    "her",   "his",   "how",   "i",    "if",
    "in",   "is",    "it",    "its",   "might", "of",    "on",    "or",   "she",
    "so",   "that",  "the",   "their", "them",  "they",  "this",  "to",   "was",
    "we",   "were",  "what",  "when",  "where", "which", "who",   "with", "you",
});
static_assert(std::is_sorted(kStopwords.begin(), kStopwords.end()));

bool is_token_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c >= 0x80;
}

char lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (is_token_byte(static_cast<unsigned char>(ch))) {
      cur.push_back(lower(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(std::string_view token) {
  return std::binary_search(kStopwords.begin(), kStopwords.end(), token);
}

std::string normalize_concept(std::string_view surface) {
  std::string out;
  out.reserve(surface.size());
  bool pending_sep = false;
  for (char ch : surface) {
    if (ch == ' ' || ch == '_' || ch == '\t') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) {
      out.push_back('_');
      pending_sep = false;
    }
    out.push_back(lower(ch));
  }
  return out;
}

std::string join_concept(const std::vector<std::string>& tokens, std::size_t begin,
                         std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out.push_back('_');
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_concept(std::string_view concept_name) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= concept_name.size()) {
    const auto pos = concept_name.find('_', start);
    const auto end = pos == std::string_view::npos ? concept_name.size() : pos;
    if (end > start) out.emplace_back(concept_name.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> singular_forms(std::string_view token) {
  std::vector<std::string> out;
  if (token.size() <= 3 || token.back() != 's' || token.ends_with("ss")) return out;
  if (token.ends_with("ies")) {
    out.push_back(std::string(token.substr(0, token.size() - 3)) + "y");
  }
  if (token.ends_with("es")) {
    out.emplace_back(token.substr(0, token.size() - 2));
  }
  out.emplace_back(token.substr(0, token.size() - 1));
  return out;
}

}  // namespace seekqa::text
