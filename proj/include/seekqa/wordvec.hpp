// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seekqa/kge.hpp"

namespace seekqa {

/// Cosine similarity; 0 when either vector has zero norm.
double cosine(std::span<const double> u, std::span<const double> v);

/// Pretrained word vectors (GloVe text format, optional word2vec header).
class WordVectors {
 public:
  WordVectors() = default;
  WordVectors(std::vector<std::string> words, EmbeddingTable vectors);

  std::size_t dim() const { return vectors_.dim(); }
  std::size_t size() const { return vectors_.rows(); }
  std::optional<std::span<const double>> find(std::string_view word) const;

  /// Mean of in-vocabulary token vectors; zero vector if none are known.
  std::vector<double> sentence_rep(const std::vector<std::string>& tokens) const;
  /// Same rule over the words of an underscore-joined concept name.
  std::vector<double> concept_rep(std::string_view concept_name) const;

  /// Maps every vector through a fixed seeded Gaussian projection to
  /// `target_dim` (entries N(0, 1/target_dim)).
  WordVectors project(std::size_t target_dim, std::uint64_t seed) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> words_;
  EmbeddingTable vectors_;
};

struct WordVectorLoadOptions {
  /// Required dimension; 0 accepts whatever the file has.
  std::size_t expected_dim = 0;
  /// When the file dimension differs from expected_dim, project instead of failing.
  bool project = false;
  std::uint64_t projection_seed = 7;
};

/// One word per line: `<word> <v1> ... <vd>`.
WordVectors load_word_vectors(std::istream& in, const WordVectorLoadOptions& opts = {});

}  // namespace seekqa
