// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seekqa/kgstore.hpp"

namespace seekqa {

/// Dense row-major table of named vectors.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const EmbeddingTable&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

struct TransEConfig {
  std::size_t dim = 100;
  double margin = 1.0;
  double learning_rate = 0.01;
  int epochs = 100;
  int negatives_per_positive = 1;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Concept table plus relation table. The relation table has 2B rows: base
/// rows followed by inverse rows, where each inverse row is the negation of
/// its base row.
struct KgEmbeddings {
  EmbeddingTable concepts;
  EmbeddingTable relations;
  double margin = 1.0;
  /// Mean margin loss after each epoch over a fixed set of corruptions
  /// (drawn once; at most 10k triples).
  std::vector<double> epoch_loss;
};

/// ||h + r - t||_2
double transe_distance(std::span<const double> h, std::span<const double> r,
                       std::span<const double> t);

/// Margin-ranking SGD with uniform head-or-tail corruption. Concept rows are
/// renormalized to unit length after every epoch.
KgEmbeddings train_transe(const KnowledgeGraph& g, const TransEConfig& cfg);

/// sigmoid(margin - ||h + r - t||). Inverse relations read the negated row,
/// so validity(t, r^-1, h) == validity(h, r, t).
double triple_validity(ConceptId h, RelationId r, ConceptId t, const KgEmbeddings& emb);

/// Mirrors base relation rows into the inverse half as negations.
void sync_inverse_rows(EmbeddingTable& relations);

/// Text export: "<rows> <dim>" then "<name> v1 ... vd" per row.
void write_embeddings(std::ostream& out, const EmbeddingTable& table,
                      const std::vector<std::string>& names);

struct NamedTable {
  std::vector<std::string> names;
  EmbeddingTable table;
};

NamedTable read_embeddings(std::istream& in);

/// Row names for a relation table: base names followed by '~'-prefixed inverses.
std::vector<std::string> relation_row_names(const KnowledgeGraph& g);

}  // namespace seekqa
