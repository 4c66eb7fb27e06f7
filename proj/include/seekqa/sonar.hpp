// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "seekqa/kge.hpp"
#include "seekqa/kgstore.hpp"
#include "seekqa/wordvec.hpp"

namespace seekqa::sonar {

/// A concept matched in text, with its inclusive token span.
struct GroundedConcept {
  ConceptId id;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const GroundedConcept&) const = default;
};

/// Simple chain concepts[0] -rel[0]-> concepts[1] ... . Inverse relation ids
/// mark steps taken against the stored edge direction.
struct LinkPath {
  std::vector<ConceptId> concepts;
  std::vector<RelationId> relations;

  std::size_t hops() const { return relations.size(); }
  auto operator<=>(const LinkPath&) const = default;
};

struct PathScores {
  double link = 0;
  double concept_sim = 0;
  double relation = 0;
};

struct Thresholds {
  double link = 0.15;
  double concept_sim = 0.30;
  double relation = 0.35;
};

struct SonarConfig {
  int max_hop = 2;
  Thresholds thresholds;
  /// "w/o SC" ablation: keep iff the link score passes.
  bool disable_semantic_constraints = false;
  /// "w/o filter" ablation: keep everything.
  bool disable_filtering = false;
  /// Max surviving paths per concept pair, highest link score first. 0 = no cap.
  std::size_t path_cap = 100;
  Traversal traversal = Traversal::bidirectional;

  void validate() const;
};

struct ScoredPath {
  LinkPath path;
  PathScores scores;
};

/// Paths sharing one <source concept, target concept> pair.
struct PathGroup {
  ConceptId source;
  ConceptId target;
  /// Paths found before filtering and capping.
  std::size_t extracted = 0;
  std::vector<ScoredPath> paths;
};

struct Subgraph {
  std::vector<ConceptId> nodes;  // sorted, unique
  std::vector<Triple> edges;     // base direction, sorted, unique
  bool operator==(const Subgraph&) const = default;
};

/// Extraction result for one question-candidate pair.
struct GroundedCandidate {
  std::string id;
  int max_hop = 0;
  std::vector<GroundedConcept> question_concepts;
  std::vector<GroundedConcept> answer_concepts;
  /// Question-to-answer groups, one per concept pair (possibly empty).
  std::vector<PathGroup> groups;
  /// Question-to-question groups; they feed the subgraph only.
  std::vector<PathGroup> question_groups;
  Subgraph subgraph;
};

/// Greedy left-to-right longest match of n-grams (n <= 4) against the concept
/// vocabulary. Single stopword tokens never match. The last word of an n-gram
/// may fall back to a singular form. Repeated concepts keep their first span.
std::vector<GroundedConcept> ground_concepts(const std::vector<std::string>& tokens,
                                             const KnowledgeGraph& g);
std::vector<GroundedConcept> ground_concepts(std::string_view text, const KnowledgeGraph& g);

/// All simple paths src -> dst with 1..max_hop steps, sorted by hop count then
/// lexicographically.
std::vector<LinkPath> enumerate_paths(const KnowledgeGraph& g, ConceptId src, ConceptId dst,
                                      int max_hop, Traversal mode = Traversal::bidirectional);

/// Scores derived from embeddings and word vectors. Caches concept
/// representations across calls; not thread-safe, use one per worker.
class PathScorer {
 public:
  PathScorer(const KnowledgeGraph& g, const KgEmbeddings& emb, const WordVectors& wv);

  PathScores score(const LinkPath& p, std::span<const double> question_rep);

 private:
  const std::vector<double>& concept_rep(ConceptId c);

  const KnowledgeGraph& g_;
  const KgEmbeddings& emb_;
  const WordVectors& wv_;
  std::unordered_map<std::uint32_t, std::vector<double>> cache_;
};

/// Two-of-three threshold rule with the ablation switches applied.
bool keep_path(const PathScores& s, const SonarConfig& cfg);

std::vector<ScoredPath> filter_paths(std::vector<ScoredPath> paths, const SonarConfig& cfg);

/// Union of the concepts and base-direction edges of the given paths.
Subgraph assemble_subgraph(std::span<const LinkPath> paths, const KnowledgeGraph& g);

/// Grounds, enumerates, scores and filters for one question-candidate pair.
GroundedCandidate extract_candidate(const std::string& id, std::string_view question,
                                    std::string_view answer, const KnowledgeGraph& g,
                                    const KgEmbeddings& emb, const WordVectors& wv,
                                    const SonarConfig& cfg);

struct PathCounts {
  std::size_t total_links = 0;  // Total L
  double avg_links_per_qa = 0;    // Avg. L1
  double avg_pairs_per_qa = 0;    // Avg. CP
  double avg_links_per_pair = 0;  // Avg. L2
};

struct PathStats {
  std::size_t qa_pairs = 0;
  std::size_t concept_pairs = 0;
  PathCounts filtered;
  PathCounts unfiltered;
};

/// Link-path statistics over question-to-answer groups. Concept pairs with
/// no path still count towards Avg. CP.
PathStats path_stats(std::span<const GroundedCandidate> dataset);

nlohmann::json to_json(const GroundedCandidate& c, const KnowledgeGraph& g);
GroundedCandidate candidate_from_json(const nlohmann::json& j, const KnowledgeGraph& g);

}  // namespace seekqa::sonar
