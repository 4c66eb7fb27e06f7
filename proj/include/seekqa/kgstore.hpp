// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seekqa {

struct ConceptId {
  std::uint32_t value = 0;
  auto operator<=>(const ConceptId&) const = default;
};

/// Relation index. Base relations occupy [0, B); traversal against the edge
/// direction uses the inverse id value + B, so inverse ids live in [B, 2B).
struct RelationId {
  std::uint32_t value = 0;
  auto operator<=>(const RelationId&) const = default;
};

struct Triple {
  ConceptId head;
  RelationId rel;  // base range only
  ConceptId tail;
  auto operator<=>(const Triple&) const = default;
};

/// One traversable step out of a concept.
struct Edge {
  RelationId rel;
  ConceptId node;
  auto operator<=>(const Edge&) const = default;
};

enum class TripleFormat { tsv3, conceptnet_csv };

TripleFormat parse_triple_format(std::string_view name);

enum class Traversal { bidirectional, directed_only };

/// String <-> dense id table. Ids are assigned in insertion order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> index_;
};

/// Immutable ConceptNet-style multigraph with forward, reverse and combined
/// adjacency stored in CSR form.
class KnowledgeGraph {
 public:
  /// Builds indices from raw triples. Duplicates are dropped.
  KnowledgeGraph(Vocabulary concepts, Vocabulary relations, std::vector<Triple> triples);

  const Vocabulary& concepts() const { return concepts_; }
  const Vocabulary& relations() const { return relations_; }
  const std::vector<Triple>& triples() const { return triples_; }

  std::size_t concept_count() const { return concepts_.size(); }
  std::size_t base_relation_count() const { return relations_.size(); }

  std::optional<ConceptId> find_concept(std::string_view name) const;
  const std::string& concept_name(ConceptId c) const;
  /// Name of a base or inverse relation; inverse names carry a leading '~'.
  std::string relation_name(RelationId r) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  bool is_inverse(RelationId r) const { return r.value >= relations_.size(); }
  RelationId inverse(RelationId r) const;
  RelationId base(RelationId r) const;

  /// Forward and inverse edges sorted by (relation id, concept id).
  std::span<const Edge> neighbors(ConceptId c) const;
  std::span<const Edge> neighbors(ConceptId c, Traversal mode) const;
  /// Forward edges only, as (base relation, tail).
  std::span<const Edge> out_edges(ConceptId c) const;
  /// Reverse index, as (base relation, head).
  std::span<const Edge> in_edges(ConceptId c) const;

  /// Binary snapshot: "SEEKKG1", little-endian u32 counts, vocabularies,
  /// then the triple array.
  void save(std::ostream& out) const;
  static KnowledgeGraph load(std::istream& in);

 private:
  void check(ConceptId c) const;

  Vocabulary concepts_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
  std::vector<std::uint32_t> fwd_offsets_, rev_offsets_, all_offsets_;
  std::vector<Edge> fwd_, rev_, all_;
};

/// Parses tsv3 (`relation<TAB>head<TAB>tail`) or the ConceptNet assertion
/// dump. Only `/c/en/` concepts are kept from the dump.
KnowledgeGraph load_triples(std::istream& in, TripleFormat format);

}  // namespace seekqa
