// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace seekqa::text {

/// Version of the built-in stopword list. Bump whenever the list changes.
inline constexpr int kStopwordListVersion = 1;

/// Lowercased word tokens. Splits on whitespace and ASCII punctuation; bytes
/// >= 0x80 are kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

bool is_stopword(std::string_view token);

/// ConceptNet surface convention: lowercase, runs of spaces become '_'.
std::string normalize_concept(std::string_view surface);

/// Joins tokens with '_' to form a concept key.
std::string join_concept(const std::vector<std::string>& tokens, std::size_t begin,
                         std::size_t end);

/// Splits an underscore-joined concept name back into words.
std::vector<std::string> split_concept(std::string_view concept_name);

/// Candidate singular forms for a plural token ("dogs" -> "dog",
/// "berries" -> "berry", "boxes" -> "box"). Empty when the token does not look
/// plural. Grounding tries these after the exact form.
std::vector<std::string> singular_forms(std::string_view token);

}  // namespace seekqa::text
