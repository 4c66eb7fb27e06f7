// SPDX-License-Identifier: Apache-2.0
#include "seekqa/sonar.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "seekqa/error.hpp"
#include "seekqa/text.hpp"

namespace seekqa::sonar {

namespace {

constexpr std::size_t kMaxNgram = 4;

std::optional<ConceptId> lookup_ngram(const std::vector<std::string>& tokens, std::size_t begin,
                                      std::size_t end, const KnowledgeGraph& g) {
  const auto key = text::join_concept(tokens, begin, end);
  if (auto c = g.find_concept(key)) return c;
  const auto& last = tokens[end - 1];
  for (const auto& singular : text::singular_forms(last)) {
    std::string alt = end - 1 > begin ? text::join_concept(tokens, begin, end - 1) + "_" : "";
    alt += singular;
    if (auto c = g.find_concept(alt)) return c;
  }
  return std::nullopt;
}

// Relations usable to step from `b` into `dst`, keyed by b.
using IntoIndex = std::unordered_map<std::uint32_t, std::vector<RelationId>>;

IntoIndex build_into_index(const KnowledgeGraph& g, ConceptId dst, Traversal mode) {
  IntoIndex into;
  if (mode == Traversal::bidirectional) {
    for (const Edge& e : g.neighbors(dst)) into[e.node.value].push_back(g.inverse(e.rel));
  } else {
    for (const Edge& e : g.in_edges(dst)) into[e.node.value].push_back(e.rel);
  }
  for (auto& [_, rels] : into) std::sort(rels.begin(), rels.end());
  return into;
}

void collect_pair_group(const KnowledgeGraph& g, PathScorer& scorer,
                        std::span<const double> question_rep, const SonarConfig& cfg,
                        PathGroup& group) {
  auto paths = enumerate_paths(g, group.source, group.target, cfg.max_hop, cfg.traversal);
  group.extracted = paths.size();
  std::vector<ScoredPath> scored;
  scored.reserve(paths.size());
  for (auto& p : paths) {
    auto s = scorer.score(p, question_rep);
    scored.push_back({std::move(p), s});
  }
  group.paths = filter_paths(std::move(scored), cfg);
}

}  // namespace

void SonarConfig::validate() const {
  if (max_hop < 1 || max_hop > 3) throw UsageError("max_hop must be in [1, 3]");
  if (!std::isfinite(thresholds.link) || !std::isfinite(thresholds.concept_sim) ||
      !std::isfinite(thresholds.relation)) {
    throw UsageError("SONAR thresholds must be finite");
  }
}

std::vector<GroundedConcept> ground_concepts(const std::vector<std::string>& tokens,
                                             const KnowledgeGraph& g) {
  std::vector<GroundedConcept> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    const std::size_t longest = std::min(kMaxNgram, tokens.size() - i);
    for (std::size_t n = longest; n >= 1; --n) {
      if (n == 1 && text::is_stopword(tokens[i])) break;
      if (auto c = lookup_ngram(tokens, i, i + n, g)) {
        const bool seen = std::any_of(out.begin(), out.end(),
                                      [&](const GroundedConcept& gc) { return gc.id == *c; });
        if (!seen) out.push_back({*c, i, i + n - 1});
        i += n;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

std::vector<GroundedConcept> ground_concepts(std::string_view text, const KnowledgeGraph& g) {
  return ground_concepts(text::tokenize(text), g);
}

std::vector<LinkPath> enumerate_paths(const KnowledgeGraph& g, ConceptId src, ConceptId dst,
                                      int max_hop, Traversal mode) {
  if (max_hop < 1 || max_hop > 3) throw UsageError("max_hop must be in [1, 3]");
  if (src == dst) throw UsageError("enumerate_paths: source and target must differ");
  if (src.value >= g.concept_count() || dst.value >= g.concept_count()) {
    throw UsageError("enumerate_paths: concept id out of range");
  }
  std::vector<LinkPath> out;
  const auto first = g.neighbors(src, mode);

  for (const Edge& e : first) {
    if (e.node == dst) out.push_back({{src, dst}, {e.rel}});
  }
  if (max_hop >= 2) {
    // Meet in the middle: the final step is looked up from dst's side, so a
    // 3-hop search only expands two levels from src.
    const IntoIndex into = build_into_index(g, dst, mode);
    for (const Edge& e1 : first) {
      const ConceptId a = e1.node;
      if (a == src || a == dst) continue;
      if (auto it = into.find(a.value); it != into.end()) {
        for (RelationId r : it->second) out.push_back({{src, a, dst}, {e1.rel, r}});
      }
      if (max_hop < 3) continue;
      for (const Edge& e2 : g.neighbors(a, mode)) {
        const ConceptId b = e2.node;
        if (b == src || b == dst || b == a) continue;
        if (auto it = into.find(b.value); it != into.end()) {
          for (RelationId r : it->second) out.push_back({{src, a, b, dst}, {e1.rel, e2.rel, r}});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const LinkPath& x, const LinkPath& y) {
    if (x.hops() != y.hops()) return x.hops() < y.hops();
    return x < y;
  });
  return out;
}

PathScorer::PathScorer(const KnowledgeGraph& g, const KgEmbeddings& emb, const WordVectors& wv)
    : g_(g), emb_(emb), wv_(wv) {
  if (emb.relations.rows() != 2 * g.base_relation_count() ||
      emb.concepts.rows() != g.concept_count()) {
    throw DataError("embedding tables do not match the knowledge graph");
  }
  if (wv.dim() != emb.relations.dim()) {
    throw DataError("word vector dim " + std::to_string(wv.dim()) +
                    " differs from relation embedding dim " + std::to_string(emb.relations.dim()));
  }
}

const std::vector<double>& PathScorer::concept_rep(ConceptId c) {
  auto it = cache_.find(c.value);
  if (it == cache_.end()) {
    it = cache_.emplace(c.value, wv_.concept_rep(g_.concept_name(c))).first;
  }
  return it->second;
}

PathScores PathScorer::score(const LinkPath& p, std::span<const double> question_rep) {
  PathScores s;
  s.link = 1.0;
  for (std::size_t i = 0; i < p.hops(); ++i) {
    s.link *= triple_validity(p.concepts[i], p.relations[i], p.concepts[i + 1], emb_);
  }
  double csum = 0;
  for (ConceptId c : p.concepts) csum += cosine(question_rep, concept_rep(c));
  s.concept_sim = csum / static_cast<double>(p.concepts.size());
  double rsum = 0;
  for (RelationId r : p.relations) rsum += cosine(question_rep, emb_.relations.row(r.value));
  s.relation = p.hops() ? rsum / static_cast<double>(p.hops()) : 0.0;
  return s;
}

bool keep_path(const PathScores& s, const SonarConfig& cfg) {
  if (cfg.disable_filtering) return true;
  const bool link_ok = s.link >= cfg.thresholds.link;
  if (cfg.disable_semantic_constraints) return link_ok;
  const int passed = int{link_ok} + int{s.concept_sim >= cfg.thresholds.concept_sim} +
                     int{s.relation >= cfg.thresholds.relation};
  return passed >= 2;
}

std::vector<ScoredPath> filter_paths(std::vector<ScoredPath> paths, const SonarConfig& cfg) {
  std::erase_if(paths, [&](const ScoredPath& p) { return !keep_path(p.scores, cfg); });
  if (cfg.path_cap > 0 && paths.size() > cfg.path_cap) {
    std::vector<std::size_t> rank(paths.size());
    for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
      return paths[a].scores.link > paths[b].scores.link;
    });
    rank.resize(cfg.path_cap);
    std::sort(rank.begin(), rank.end());
    std::vector<ScoredPath> kept;
    kept.reserve(rank.size());
    for (std::size_t i : rank) kept.push_back(std::move(paths[i]));
    paths = std::move(kept);
  }
  return paths;
}

Subgraph assemble_subgraph(std::span<const LinkPath> paths, const KnowledgeGraph& g) {
  Subgraph sg;
  for (const auto& p : paths) {
    sg.nodes.insert(sg.nodes.end(), p.concepts.begin(), p.concepts.end());
    for (std::size_t i = 0; i < p.hops(); ++i) {
      const RelationId r = p.relations[i];
      if (g.is_inverse(r)) {
        sg.edges.push_back({p.concepts[i + 1], g.base(r), p.concepts[i]});
      } else {
        sg.edges.push_back({p.concepts[i], r, p.concepts[i + 1]});
      }
    }
  }
  std::sort(sg.nodes.begin(), sg.nodes.end());
  sg.nodes.erase(std::unique(sg.nodes.begin(), sg.nodes.end()), sg.nodes.end());
  std::sort(sg.edges.begin(), sg.edges.end());
  sg.edges.erase(std::unique(sg.edges.begin(), sg.edges.end()), sg.edges.end());
  return sg;
}

GroundedCandidate extract_candidate(const std::string& id, std::string_view question,
                                    std::string_view answer, const KnowledgeGraph& g,
                                    const KgEmbeddings& emb, const WordVectors& wv,
                                    const SonarConfig& cfg) {
  cfg.validate();
  GroundedCandidate out;
  out.id = id;
  out.max_hop = cfg.max_hop;
  const auto q_tokens = text::tokenize(question);
  out.question_concepts = ground_concepts(q_tokens, g);
  out.answer_concepts = ground_concepts(answer, g);

  const auto q_rep = wv.sentence_rep(q_tokens);
  PathScorer scorer(g, emb, wv);

  for (const auto& qc : out.question_concepts) {
    for (const auto& ac : out.answer_concepts) {
      if (qc.id == ac.id) continue;
      PathGroup group{qc.id, ac.id, 0, {}};
      collect_pair_group(g, scorer, q_rep, cfg, group);
      out.groups.push_back(std::move(group));
    }
  }
  for (std::size_t i = 0; i < out.question_concepts.size(); ++i) {
    for (std::size_t j = i + 1; j < out.question_concepts.size(); ++j) {
      PathGroup group{out.question_concepts[i].id, out.question_concepts[j].id, 0, {}};
      collect_pair_group(g, scorer, q_rep, cfg, group);
      out.question_groups.push_back(std::move(group));
    }
  }

  std::vector<LinkPath> surviving;
  for (const auto* groups : {&out.groups, &out.question_groups}) {
    for (const auto& grp : *groups) {
      for (const auto& sp : grp.paths) surviving.push_back(sp.path);
    }
  }
  out.subgraph = assemble_subgraph(surviving, g);
  return out;
}

PathStats path_stats(std::span<const GroundedCandidate> dataset) {
  PathStats st;
  st.qa_pairs = dataset.size();
  for (const auto& c : dataset) {
    st.concept_pairs += c.groups.size();
    for (const auto& grp : c.groups) {
      st.filtered.total_links += grp.paths.size();
      st.unfiltered.total_links += grp.extracted;
    }
  }
  for (PathCounts* pc : {&st.filtered, &st.unfiltered}) {
    if (st.qa_pairs > 0) {
      pc->avg_links_per_qa = static_cast<double>(pc->total_links) / static_cast<double>(st.qa_pairs);
      pc->avg_pairs_per_qa =
          static_cast<double>(st.concept_pairs) / static_cast<double>(st.qa_pairs);
    }
    if (st.concept_pairs > 0) {
      pc->avg_links_per_pair =
          static_cast<double>(pc->total_links) / static_cast<double>(st.concept_pairs);
    }
  }
  return st;
}

namespace {

nlohmann::json concepts_json(const std::vector<GroundedConcept>& cs, const KnowledgeGraph& g) {
  auto arr = nlohmann::json::array();
  for (const auto& c : cs) {
    arr.push_back({{"concept", g.concept_name(c.id)}, {"span", {c.begin, c.end}}});
  }
  return arr;
}

nlohmann::json groups_json(const std::vector<PathGroup>& groups, const KnowledgeGraph& g) {
  auto arr = nlohmann::json::array();
  for (const auto& grp : groups) {
    auto paths = nlohmann::json::array();
    for (const auto& sp : grp.paths) {
      nlohmann::json concepts = nlohmann::json::array(), relations = nlohmann::json::array(),
                     inverse = nlohmann::json::array();
      for (ConceptId c : sp.path.concepts) concepts.push_back(g.concept_name(c));
      for (RelationId r : sp.path.relations) {
        relations.push_back(g.relation_name(g.base(r)));
        inverse.push_back(g.is_inverse(r));
      }
      paths.push_back({{"concepts", std::move(concepts)},
                       {"relations", std::move(relations)},
                       {"inverse_flags", std::move(inverse)},
                       {"scores",
                        {{"link", sp.scores.link},
                         {"concept", sp.scores.concept_sim},
                         {"relation", sp.scores.relation}}}});
    }
    arr.push_back({{"pair", {g.concept_name(grp.source), g.concept_name(grp.target)}},
                   {"extracted", grp.extracted},
                   {"paths", std::move(paths)}});
  }
  return arr;
}

ConceptId resolve_concept(const KnowledgeGraph& g, const std::string& name, const std::string& id) {
  auto c = g.find_concept(name);
  if (!c) throw DataError("record " + id + ": unknown concept '" + name + "'");
  return *c;
}

RelationId resolve_relation(const KnowledgeGraph& g, const std::string& name, bool inverse,
                            const std::string& id) {
  auto r = g.find_relation(name);
  if (!r || g.is_inverse(*r)) throw DataError("record " + id + ": unknown relation '" + name + "'");
  return inverse ? g.inverse(*r) : *r;
}

std::vector<GroundedConcept> concepts_from_json(const nlohmann::json& arr, const KnowledgeGraph& g,
                                                const std::string& id) {
  std::vector<GroundedConcept> out;
  for (const auto& c : arr) {
    const auto span = c.at("span");
    out.push_back({resolve_concept(g, c.at("concept").get<std::string>(), id),
                   span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()});
  }
  return out;
}

std::vector<PathGroup> groups_from_json(const nlohmann::json& arr, const KnowledgeGraph& g,
                                        const std::string& id) {
  std::vector<PathGroup> out;
  for (const auto& gj : arr) {
    PathGroup grp;
    const auto& pair = gj.at("pair");
    grp.source = resolve_concept(g, pair.at(0).get<std::string>(), id);
    grp.target = resolve_concept(g, pair.at(1).get<std::string>(), id);
    grp.extracted = gj.value("extracted", std::size_t{0});
    for (const auto& pj : gj.at("paths")) {
      ScoredPath sp;
      for (const auto& c : pj.at("concepts")) {
        sp.path.concepts.push_back(resolve_concept(g, c.get<std::string>(), id));
      }
      const auto& rels = pj.at("relations");
      const auto& inv = pj.at("inverse_flags");
      if (rels.size() != inv.size() || rels.size() + 1 != sp.path.concepts.size() || rels.empty()) {
        throw DataError("record " + id + ": inconsistent path lengths");
      }
      for (std::size_t i = 0; i < rels.size(); ++i) {
        sp.path.relations.push_back(
            resolve_relation(g, rels[i].get<std::string>(), inv[i].get<bool>(), id));
      }
      if (sp.path.concepts.front() != grp.source || sp.path.concepts.back() != grp.target) {
        throw DataError("record " + id + ": path endpoints do not match its group pair");
      }
      const auto& s = pj.at("scores");
      sp.scores = {s.at("link").get<double>(), s.at("concept").get<double>(),
                   s.at("relation").get<double>()};
      grp.paths.push_back(std::move(sp));
    }
    grp.extracted = std::max(grp.extracted, grp.paths.size());
    out.push_back(std::move(grp));
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const GroundedCandidate& c, const KnowledgeGraph& g) {
  auto nodes = nlohmann::json::array();
  for (ConceptId n : c.subgraph.nodes) nodes.push_back(g.concept_name(n));
  auto edges = nlohmann::json::array();
  for (const auto& t : c.subgraph.edges) {
    edges.push_back({g.concept_name(t.head), g.relation_name(t.rel), g.concept_name(t.tail)});
  }
  return {{"id", c.id},
          {"max_hop", c.max_hop},
          {"q_concepts", concepts_json(c.question_concepts, g)},
          {"a_concepts", concepts_json(c.answer_concepts, g)},
          {"groups", groups_json(c.groups, g)},
          {"qq_groups", groups_json(c.question_groups, g)},
          {"subgraph", {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}}}};
}

GroundedCandidate candidate_from_json(const nlohmann::json& j, const KnowledgeGraph& g) {
  GroundedCandidate c;
  try {
    c.id = j.at("id").get<std::string>();
    c.max_hop = j.value("max_hop", 0);
    c.question_concepts = concepts_from_json(j.at("q_concepts"), g, c.id);
    c.answer_concepts = concepts_from_json(j.at("a_concepts"), g, c.id);
    c.groups = groups_from_json(j.at("groups"), g, c.id);
    if (j.contains("qq_groups")) c.question_groups = groups_from_json(j.at("qq_groups"), g, c.id);
    const auto& sg = j.at("subgraph");
    for (const auto& n : sg.at("nodes")) {
      c.subgraph.nodes.push_back(resolve_concept(g, n.get<std::string>(), c.id));
    }
    for (const auto& e : sg.at("edges")) {
      c.subgraph.edges.push_back({resolve_concept(g, e.at(0).get<std::string>(), c.id),
                                  resolve_relation(g, e.at(1).get<std::string>(), false, c.id),
                                  resolve_concept(g, e.at(2).get<std::string>(), c.id)});
    }
    std::sort(c.subgraph.nodes.begin(), c.subgraph.nodes.end());
    std::sort(c.subgraph.edges.begin(), c.subgraph.edges.end());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("record " + (c.id.empty() ? std::string("?") : c.id) + ": " + e.what());
  }
  return c;
}

}  // namespace seekqa::sonar
