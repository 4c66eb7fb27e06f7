// SPDX-License-Identifier: Apache-2.0
#include "seekqa/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "seekqa/error.hpp"
#include "seekqa/rng.hpp"
#include "seekqa/text.hpp"

namespace seekqa::encoder {

namespace {

std::string lowered(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::size_t separator_index(const ContextualEncoding& enc) {
  for (std::size_t i = 0; i < enc.tokens.size(); ++i) {
    if (lowered(enc.tokens[i]) == "[sep]") return i;
  }
  return enc.tokens.size();
}

}  // namespace

void ContextualEncoding::validate() const {
  if (d_h == 0) throw DataError("record " + id + ": d_h must be positive");
  if (H.size() != tokens.size()) {
    throw DataError("record " + id + ": H has " + std::to_string(H.size()) + " rows for " +
                    std::to_string(tokens.size()) + " tokens");
  }
  for (const auto& row : H) {
    if (row.size() != d_h) throw DataError("record " + id + ": ragged H row");
    for (double x : row) {
      if (!std::isfinite(x)) throw DataError("record " + id + ": non-finite value in H");
    }
  }
  if (h0.size() != d_h) throw DataError("record " + id + ": h0 has wrong dimension");
  for (const auto& [name, span] : span_map) {
    if (span.begin > span.end || span.end >= tokens.size()) {
      throw DataError("record " + id + ": span for '" + name + "' out of range");
    }
  }
}

std::vector<double> stub_token_vector(const std::string& token, std::uint64_t seed, std::size_t d_h) {
  Rng rng(fnv1a(token, fnv1a(std::to_string(seed))));
  std::vector<double> v(d_h);
  double norm = 0;
  do {
    norm = 0;
    for (double& x : v) {
      x = rng.uniform(-1.0, 1.0);
      norm += x * x;
    }
  } while (norm == 0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

ContextualEncoding stub_encode(const std::string& id, const std::string& question,
                               const std::string& answer, std::uint64_t seed, std::size_t d_h) {
  if (d_h == 0) throw UsageError("stub_encode: d_h must be positive");
  ContextualEncoding enc;
  enc.id = id;
  enc.d_h = d_h;
  enc.tokens = text::tokenize(question);
  enc.tokens.emplace_back(kSeparatorToken);
  for (auto& t : text::tokenize(answer)) enc.tokens.push_back(std::move(t));
  enc.h0.assign(d_h, 0.0);
  for (const auto& tok : enc.tokens) {
    enc.H.push_back(stub_token_vector(tok, seed, d_h));
    for (std::size_t k = 0; k < d_h; ++k) enc.h0[k] += enc.H.back()[k];
  }
  for (double& x : enc.h0) x /= static_cast<double>(enc.tokens.size());
  return enc;
}

std::vector<double> concept_context_rep(const ContextualEncoding& enc, TokenSpan span) {
  if (span.begin > span.end || span.end >= enc.H.size()) {
    throw UsageError("concept_context_rep: span [" + std::to_string(span.begin) + ", " +
                     std::to_string(span.end) + "] outside " + std::to_string(enc.H.size()) +
                     " tokens of record " + enc.id);
  }
  std::vector<double> out(enc.d_h, 0.0);
  for (std::size_t t = span.begin; t <= span.end; ++t) {
    for (std::size_t k = 0; k < enc.d_h; ++k) out[k] += enc.H[t][k];
  }
  const double n = static_cast<double>(span.end - span.begin + 1);
  for (double& x : out) x /= n;
  return out;
}

void write_encoding(std::ostream& out, const ContextualEncoding& enc) {
  // Hand-written so doubles keep 17 significant digits.
  auto vec = [&](const std::vector<double>& v) {
    out << '[';
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      if (i) out << ',';
      out << buf;
    }
    out << ']';
  };
  out << "{\"id\":" << nlohmann::json(enc.id).dump() << ",\"d_h\":" << enc.d_h
      << ",\"tokens\":" << nlohmann::json(enc.tokens).dump() << ",\"H\":[";
  for (std::size_t i = 0; i < enc.H.size(); ++i) {
    if (i) out << ',';
    vec(enc.H[i]);
  }
  out << "],\"h0\":";
  vec(enc.h0);
  out << "}\n";
  if (!out) throw IoError("failed writing encodings");
}

std::map<std::string, ContextualEncoding> load_encodings(std::istream& in, std::size_t expected_d_h) {
  std::map<std::string, ContextualEncoding> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t d_h = expected_d_h;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ContextualEncoding enc;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("encodings line " + std::to_string(line_no) + ": " + e.what());
    }
    enc.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                     : "<line " + std::to_string(line_no) + ">";
    try {
      for (const char* field : {"id", "d_h", "tokens", "H", "h0"}) {
        if (!j.contains(field)) throw DataError(std::string("missing field '") + field + "'");
      }
      enc.d_h = j.at("d_h").get<std::size_t>();
      enc.tokens = j.at("tokens").get<std::vector<std::string>>();
      enc.H = j.at("H").get<std::vector<std::vector<double>>>();
      enc.h0 = j.at("h0").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("record " + enc.id + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("record " + enc.id + ": " + e.what());
    }
    enc.validate();
    if (d_h == 0) d_h = enc.d_h;
    if (enc.d_h != d_h) {
      throw DataError("record " + enc.id + ": d_h " + std::to_string(enc.d_h) + " differs from " +
                      std::to_string(d_h));
    }
    if (!out.emplace(enc.id, enc).second) throw DataError("record " + enc.id + ": duplicate id");
  }
  return out;
}

TokenSpan resolve_span(const ContextualEncoding& enc, const std::vector<std::string>& source_tokens,
                       TokenSpan source_span, bool in_answer, std::size_t question_token_count) {
  if (source_span.begin > source_span.end || source_span.end >= source_tokens.size()) {
    throw DataError("record " + enc.id + ": grounded span out of range");
  }
  const std::size_t sep = separator_index(enc);
  const std::size_t offset = in_answer ? question_token_count + 1 : 0;
  const TokenSpan direct{source_span.begin + offset, source_span.end + offset};

  auto matches_at = [&](std::size_t pos) {
    for (std::size_t k = 0; k + source_span.begin <= source_span.end; ++k) {
      if (pos + k >= enc.tokens.size() ||
          lowered(enc.tokens[pos + k]) != source_tokens[source_span.begin + k]) {
        return false;
      }
    }
    return true;
  };
  if (sep == question_token_count && direct.end < enc.tokens.size() && matches_at(direct.begin)) {
    return direct;
  }
  const std::size_t lo = in_answer ? std::min(sep + 1, enc.tokens.size()) : 0;
  const std::size_t hi = in_answer ? enc.tokens.size() : sep;
  const std::size_t len = source_span.end - source_span.begin + 1;
  for (std::size_t pos = lo; pos + len <= hi; ++pos) {
    if (matches_at(pos)) return {pos, pos + len - 1};
  }
  std::string words;
  for (std::size_t k = source_span.begin; k <= source_span.end; ++k) {
    words += (k > source_span.begin ? " " : "") + source_tokens[k];
  }
  throw DataError("record " + enc.id + ": cannot locate concept words '" + words +
                  "' in encoder tokens");
}

}  // namespace seekqa::encoder
