// SPDX-License-Identifier: Apache-2.0
#include "seekqa/kgstore.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <istream>
#include <ostream>

#include "seekqa/error.hpp"
#include "seekqa/text.hpp"

namespace seekqa {

namespace {

constexpr std::array<char, 7> kSnapshotMagic = {'S', 'E', 'E', 'K', 'K', 'G', '1'};

void build_csr(std::size_t nodes, std::vector<std::pair<std::uint32_t, Edge>> entries,
               std::vector<std::uint32_t>& offsets, std::vector<Edge>& edges) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  offsets.assign(nodes + 1, 0);
  for (const auto& e : entries) ++offsets[e.first + 1];
  for (std::size_t i = 0; i < nodes; ++i) offsets[i + 1] += offsets[i];
  edges.clear();
  edges.reserve(entries.size());
  for (const auto& e : entries) edges.push_back(e.second);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), b.size());
}

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw DataError("knowledge graph snapshot truncated");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_vocab(std::ostream& out, const Vocabulary& v) {
  for (const auto& name : v.names()) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
}

Vocabulary read_vocab(std::istream& in, std::uint32_t count) {
  Vocabulary v;
  std::string name;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = read_u32(in);
    name.resize(len);
    if (!in.read(name.data(), len)) throw DataError("knowledge graph snapshot truncated");
    if (v.intern(name) != i) throw DataError("duplicate vocabulary entry in snapshot: " + name);
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// "/c/en/ice_cream/n/..." -> "ice_cream"; non-English -> empty.
std::string_view conceptnet_english_term(std::string_view uri) {
  constexpr std::string_view prefix = "/c/en/";
  if (!uri.starts_with(prefix)) return {};
  uri.remove_prefix(prefix.size());
  return uri.substr(0, uri.find('/'));
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw DataError("line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

TripleFormat parse_triple_format(std::string_view name) {
  if (name == "tsv3") return TripleFormat::tsv3;
  if (name == "conceptnet_csv" || name == "conceptnet") return TripleFormat::conceptnet_csv;
  throw UsageError("unknown triple format: " + std::string(name));
}

std::uint32_t Vocabulary::intern(std::string_view name) {
  if (auto it = index_.find(name); it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  if (auto it = index_.find(name); it != index_.end()) return it->second;
  return std::nullopt;
}

KnowledgeGraph::KnowledgeGraph(Vocabulary concepts, Vocabulary relations,
                               std::vector<Triple> triples)
    : concepts_(std::move(concepts)), relations_(std::move(relations)), triples_(std::move(triples)) {
  for (const auto& t : triples_) {
    if (t.head.value >= concepts_.size() || t.tail.value >= concepts_.size() ||
        t.rel.value >= relations_.size()) {
      throw DataError("triple references an unknown concept or relation id");
    }
  }
  std::sort(triples_.begin(), triples_.end());
  triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());

  const auto n = concepts_.size();
  const auto base = static_cast<std::uint32_t>(relations_.size());
  std::vector<std::pair<std::uint32_t, Edge>> fwd, rev, all;
  fwd.reserve(triples_.size());
  rev.reserve(triples_.size());
  all.reserve(2 * triples_.size());
  for (const auto& t : triples_) {
    fwd.push_back({t.head.value, Edge{t.rel, t.tail}});
    rev.push_back({t.tail.value, Edge{t.rel, t.head}});
    all.push_back({t.head.value, Edge{t.rel, t.tail}});
    all.push_back({t.tail.value, Edge{RelationId{t.rel.value + base}, t.head}});
  }
  build_csr(n, std::move(fwd), fwd_offsets_, fwd_);
  build_csr(n, std::move(rev), rev_offsets_, rev_);
  build_csr(n, std::move(all), all_offsets_, all_);
}

std::optional<ConceptId> KnowledgeGraph::find_concept(std::string_view name) const {
  if (auto id = concepts_.find(name)) return ConceptId{*id};
  return std::nullopt;
}

const std::string& KnowledgeGraph::concept_name(ConceptId c) const {
  check(c);
  return concepts_.name(c.value);
}

std::string KnowledgeGraph::relation_name(RelationId r) const {
  if (r.value >= 2 * relations_.size()) throw UsageError("relation id out of range");
  if (is_inverse(r)) return "~" + relations_.name(r.value - relations_.size());
  return relations_.name(r.value);
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  const bool inv = name.starts_with('~');
  if (inv) name.remove_prefix(1);
  auto id = relations_.find(name);
  if (!id) return std::nullopt;
  return RelationId{inv ? *id + static_cast<std::uint32_t>(relations_.size()) : *id};
}

RelationId KnowledgeGraph::inverse(RelationId r) const {
  const auto b = static_cast<std::uint32_t>(relations_.size());
  return RelationId{r.value >= b ? r.value - b : r.value + b};
}

RelationId KnowledgeGraph::base(RelationId r) const {
  return is_inverse(r) ? inverse(r) : r;
}

void KnowledgeGraph::check(ConceptId c) const {
  if (c.value >= concepts_.size()) {
    throw UsageError("concept id " + std::to_string(c.value) + " out of range");
  }
}

std::span<const Edge> KnowledgeGraph::neighbors(ConceptId c) const {
  check(c);
  return {all_.data() + all_offsets_[c.value], all_offsets_[c.value + 1] - all_offsets_[c.value]};
}

std::span<const Edge> KnowledgeGraph::neighbors(ConceptId c, Traversal mode) const {
  return mode == Traversal::bidirectional ? neighbors(c) : out_edges(c);
}

std::span<const Edge> KnowledgeGraph::out_edges(ConceptId c) const {
  check(c);
  return {fwd_.data() + fwd_offsets_[c.value], fwd_offsets_[c.value + 1] - fwd_offsets_[c.value]};
}

std::span<const Edge> KnowledgeGraph::in_edges(ConceptId c) const {
  check(c);
  return {rev_.data() + rev_offsets_[c.value], rev_offsets_[c.value + 1] - rev_offsets_[c.value]};
}

void KnowledgeGraph::save(std::ostream& out) const {
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  write_u32(out, static_cast<std::uint32_t>(concepts_.size()));
  write_u32(out, static_cast<std::uint32_t>(relations_.size()));
  write_u32(out, static_cast<std::uint32_t>(triples_.size()));
  write_vocab(out, concepts_);
  write_vocab(out, relations_);
  for (const auto& t : triples_) {
    write_u32(out, t.head.value);
    write_u32(out, t.rel.value);
    write_u32(out, t.tail.value);
  }
  if (!out) throw IoError("failed writing knowledge graph snapshot");
}

KnowledgeGraph KnowledgeGraph::load(std::istream& in) {
  std::array<char, 7> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kSnapshotMagic) {
    throw DataError("not a knowledge graph snapshot (bad magic)");
  }
  const auto n_concepts = read_u32(in);
  const auto n_relations = read_u32(in);
  const auto n_triples = read_u32(in);
  auto concepts = read_vocab(in, n_concepts);
  auto relations = read_vocab(in, n_relations);
  std::vector<Triple> triples(n_triples);
  for (auto& t : triples) {
    t.head.value = read_u32(in);
    t.rel.value = read_u32(in);
    t.tail.value = read_u32(in);
  }
  return KnowledgeGraph(std::move(concepts), std::move(relations), std::move(triples));
}

KnowledgeGraph load_triples(std::istream& in, TripleFormat format) {
  Vocabulary concepts, relations;
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  std::size_t content_lines = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++content_lines;
    const auto fields = split_tabs(line);
    std::string rel, head, tail;
    if (format == TripleFormat::tsv3) {
      if (fields.size() != 3) malformed(line_no, "expected 3 tab-separated fields");
      rel = fields[0];
      head = text::normalize_concept(fields[1]);
      tail = text::normalize_concept(fields[2]);
    } else {
      if (fields.size() < 4) malformed(line_no, "expected at least 4 tab-separated fields");
      if (!fields[1].starts_with("/r/")) malformed(line_no, "relation must start with /r/");
      const auto h = conceptnet_english_term(fields[2]);
      const auto t = conceptnet_english_term(fields[3]);
      if (h.empty() || t.empty()) continue;
      rel = fields[1].substr(3);
      head = text::normalize_concept(h);
      tail = text::normalize_concept(t);
    }
    if (rel.empty() || head.empty() || tail.empty()) malformed(line_no, "empty field");
    if (rel.front() == '~') malformed(line_no, "relation names may not start with '~'");
    triples.push_back(Triple{ConceptId{concepts.intern(head)}, RelationId{relations.intern(rel)},
                             ConceptId{concepts.intern(tail)}});
  }
  if (content_lines == 0) throw DataError("empty triple input");
  if (triples.empty()) throw DataError("no usable triples in input");
  return KnowledgeGraph(std::move(concepts), std::move(relations), std::move(triples));
}

}  // namespace seekqa
