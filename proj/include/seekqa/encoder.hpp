// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace seekqa::encoder {

inline constexpr const char* kSeparatorToken = "[SEP]";

/// Inclusive token range [begin, end].
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  auto operator<=>(const TokenSpan&) const = default;
};

/// Word-level contextual vectors for one question-candidate pair.
struct ContextualEncoding {
  std::string id;
  std::size_t d_h = 0;
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> H;  // one row per token
  std::vector<double> h0;
  /// concept name -> span in tokens; filled by align_spans.
  std::map<std::string, TokenSpan> span_map;

  void validate() const;
};

/// Deterministic stand-in for a pretrained encoder. Tokens are
/// tokenize(question) + [SEP] + tokenize(answer); each token's vector is drawn
/// from a generator keyed by (token, seed) and L2-normalized; h0 is the token
/// mean.
ContextualEncoding stub_encode(const std::string& id, const std::string& question,
                               const std::string& answer, std::uint64_t seed, std::size_t d_h);

/// The unit vector stub_encode assigns to a token.
std::vector<double> stub_token_vector(const std::string& token, std::uint64_t seed, std::size_t d_h);

/// Mean of H over the span.
std::vector<double> concept_context_rep(const ContextualEncoding& enc, TokenSpan span);

/// One JSON object per line: {"id", "d_h", "tokens", "H", "h0"}.
void write_encoding(std::ostream& out, const ContextualEncoding& enc);

/// Reads an exchange file. `expected_d_h` of 0 accepts the first record's dim;
/// every record must then agree. Errors name the offending record id.
std::map<std::string, ContextualEncoding> load_encodings(std::istream& in,
                                                         std::size_t expected_d_h = 0);

/// Maps token spans produced by grounding the question (and, separately, the
/// answer) onto the encoding's token sequence. If the encoding tokens are
/// exactly question + [SEP] + answer the offsets are direct; otherwise the
/// concept's words are searched for in the matching region.
TokenSpan resolve_span(const ContextualEncoding& enc, const std::vector<std::string>& source_tokens,
                       TokenSpan source_span, bool in_answer, std::size_t question_token_count);

}  // namespace seekqa::encoder
