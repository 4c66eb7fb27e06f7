// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace seekqa::testing {

KnowledgeGraph graph_from(const std::vector<std::tuple<std::string, std::string, std::string>>& rows) {
  std::ostringstream tsv;
  for (const auto& [r, h, t] : rows) tsv << r << '\t' << h << '\t' << t << '\n';
  std::istringstream in(tsv.str());
  return load_triples(in, TripleFormat::tsv3);
}

KnowledgeGraph random_graph(Rng& rng, std::size_t nodes, std::size_t edges, std::size_t relations) {
  Vocabulary concepts, rels;
  for (std::size_t i = 0; i < nodes; ++i) concepts.intern("c" + std::to_string(i));
  for (std::size_t i = 0; i < relations; ++i) rels.intern("r" + std::to_string(i));
  std::vector<Triple> triples;
  for (std::size_t e = 0; e < edges; ++e) {
    const auto h = static_cast<std::uint32_t>(rng.below(nodes));
    auto t = static_cast<std::uint32_t>(rng.below(nodes - 1));
    if (t >= h) ++t;
    triples.push_back({ConceptId{h}, RelationId{static_cast<std::uint32_t>(rng.below(relations))},
                       ConceptId{t}});
  }
  return KnowledgeGraph(std::move(concepts), std::move(rels), std::move(triples));
}

std::set<sonar::LinkPath> brute_force_paths(const KnowledgeGraph& g, ConceptId src, ConceptId dst,
                                            int max_hop) {
  const auto b = static_cast<std::uint32_t>(g.base_relation_count());
  std::set<sonar::LinkPath> out;
  sonar::LinkPath cur;
  cur.concepts.push_back(src);
  std::function<void()> walk = [&] {
    const ConceptId at = cur.concepts.back();
    if (at == dst) {
      out.insert(cur);
      return;
    }
    if (static_cast<int>(cur.relations.size()) == max_hop) return;
    auto step = [&](RelationId r, ConceptId next) {
      if (std::find(cur.concepts.begin(), cur.concepts.end(), next) != cur.concepts.end()) return;
      cur.concepts.push_back(next);
      cur.relations.push_back(r);
      walk();
      cur.concepts.pop_back();
      cur.relations.pop_back();
    };
    for (const auto& t : g.triples()) {
      if (t.head == at) step(t.rel, t.tail);
      if (t.tail == at) step(RelationId{t.rel.value + b}, t.head);
    }
  };
  walk();
  return out;
}

EmbeddingTable random_table(Rng& rng, std::size_t rows, std::size_t dim, double scale) {
  EmbeddingTable t(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (double& x : t.row(i)) x = rng.uniform(-scale, scale);
  }
  return t;
}

sketch::ModelDims toy_dims() {
  sketch::ModelDims d;
  d.d_h = 4;
  d.d_g = 3;
  d.d_r = 3;
  d.d_gru = 3;
  d.d_a = 3;
  d.d_k = 4;
  d.gat_layers = 2;
  return d;
}

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

sketch::CandidateInput random_candidate(Rng& rng, const sketch::ModelDims& dims,
                                        std::size_t concept_rows, std::size_t relation_rows,
                                        std::size_t nodes) {
  sketch::CandidateInput c;
  for (std::size_t j = 0; j < nodes; ++j) {
    c.node_concepts.push_back(static_cast<std::uint32_t>(rng.below(concept_rows)));
  }
  c.adjacency.resize(nodes);
  auto other = [&](std::uint32_t j) {
    auto k = static_cast<std::uint32_t>(rng.below(nodes - 1));
    return k >= j ? k + 1 : k;
  };
  auto rel = [&] { return static_cast<std::uint32_t>(rng.below(relation_rows)); };
  for (std::uint32_t j = 0; j < nodes; ++j) {
    for (int e = 0; e < 2; ++e) {
      const auto k = other(j);
      const auto r = rel();
      c.adjacency[j].push_back({k, {r, false}});
      c.adjacency[k].push_back({j, {r, true}});
    }
  }
  for (int gi = 0; gi < 2; ++gi) {
    sketch::GroupInput g;
    g.question_node = static_cast<std::uint32_t>(rng.below(nodes));
    g.answer_node = other(g.question_node);
    g.question_context = random_vec(rng, dims.d_h);
    g.answer_context = random_vec(rng, dims.d_h);
    const auto paths = 2 + rng.below(2);
    for (std::uint64_t p = 0; p < paths; ++p) {
      sketch::PathInput path;
      const auto hops = 1 + rng.below(3);
      path.nodes.push_back(g.question_node);
      for (std::uint64_t h = 0; h + 1 < hops; ++h) path.nodes.push_back(other(path.nodes.back()));
      path.nodes.push_back(g.answer_node);
      for (std::uint64_t h = 0; h < hops; ++h) path.relations.push_back({rel(), rng.below(2) == 1});
      g.paths.push_back(std::move(path));
    }
    c.groups.push_back(std::move(g));
  }
  c.answer_nodes = {c.groups[0].answer_node, c.groups[1].answer_node};
  c.h0 = random_vec(rng, dims.d_h);
  return c;
}

ToyProblem toy_problem(std::uint64_t seed, const sketch::ModelDims& dims, std::size_t instances) {
  Rng rng(seed);
  ToyProblem p;
  p.concepts = std::make_shared<const EmbeddingTable>(random_table(rng, 10, dims.d_g));
  p.relations = std::make_shared<const EmbeddingTable>(random_table(rng, 4, dims.d_r));
  for (std::size_t i = 0; i < instances; ++i) {
    sketch::InstanceInput inst;
    inst.id = "toy" + std::to_string(i);
    for (std::size_t c = 0; c < harness::kCandidateCount; ++c) {
      inst.candidates.push_back(random_candidate(rng, dims, 10, 4));
    }
    inst.gold = static_cast<int>(rng.below(harness::kCandidateCount));
    p.batch.push_back(std::move(inst));
  }
  return p;
}

std::vector<TensorCheck> gradient_check(sketch::SketchModel& model,
                                        const std::vector<sketch::InstanceInput>& batch,
                                        double step) {
  model.loss_and_grad(batch);
  std::vector<TensorCheck> out;
  for (auto& p : model.params().all()) {
    const std::vector<double> analytic = p.grad;
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + step;
      const double up = model.loss(batch);
      p.value[k] = saved - step;
      const double down = model.loss(batch);
      p.value[k] = saved;
      const double numeric = (up - down) / (2 * step);
      diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
      a2 += analytic[k] * analytic[k];
      n2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    // Both sides below 1e-10 count as an exact zero gradient.
    out.push_back({p.name, denom > 1e-10 ? std::sqrt(diff2) / denom : 0.0, std::sqrt(a2)});
  }
  return out;
}

std::vector<std::vector<double>> trace_distributions(const sketch::CandidateTrace& trace) {
  std::vector<std::vector<double>> out;
  for (const auto& layer : trace.gat_attention) {
    for (const auto& node : layer) {
      if (!node.empty()) out.push_back(node);
    }
  }
  for (const auto& w : trace.link_weights) out.push_back(w);
  if (!trace.union_weights.empty()) out.push_back(trace.union_weights);
  return out;
}

OverfitSet overfit_set(std::uint64_t seed) {
  const std::vector<std::string> answers = {"apple", "river", "stone", "cloud", "lamp"};
  const std::vector<std::string> filler = {
      "which", "item", "from", "this", "short", "list", "would", "most", "likely", "be",
      "found", "near", "or", "belong", "together", "with", "the", "named", "thing", "called"};
  constexpr std::size_t kQuestions = 20;

  OverfitSet s;
  s.seed = seed;
  std::vector<std::tuple<std::string, std::string, std::string>> rows;
  for (std::size_t i = 0; i < kQuestions; ++i) {
    rows.emplace_back("RelatedTo", "q" + std::to_string(i), answers[i % answers.size()]);
  }
  s.graph = std::make_unique<KnowledgeGraph>(graph_from(rows));

  s.dims.d_h = 16;
  s.dims.d_g = 8;
  s.dims.d_r = 8;
  s.dims.d_gru = 8;
  s.dims.d_a = 8;
  s.dims.d_k = 8;
  s.dims.gat_layers = 2;

  TransEConfig tc;
  tc.dim = s.dims.d_g;
  tc.epochs = 300;
  tc.seed = seed;
  s.embeddings = train_transe(*s.graph, tc);

  Rng rng(seed ^ 0x5eed);
  std::vector<double> base(tc.dim);
  for (double& x : base) x = rng.uniform(-1.0, 1.0);
  std::vector<std::string> words = filler;
  for (const auto& a : answers) words.push_back(a);
  for (std::size_t i = 0; i < kQuestions; ++i) words.push_back("q" + std::to_string(i));
  EmbeddingTable vecs(words.size(), tc.dim);
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (std::size_t k = 0; k < tc.dim; ++k) vecs.row(w)[k] = base[k] + rng.uniform(-0.2, 0.2);
  }
  s.words = WordVectors(words, std::move(vecs));

  for (std::size_t i = 0; i < kQuestions; ++i) {
    harness::QAInstance inst;
    inst.id = "syn" + std::to_string(i);
    inst.question.clear();
    for (const auto& w : filler) inst.question += w + " ";
    inst.question += "q" + std::to_string(i);
    inst.labels = {"A", "B", "C", "D", "E"};
    inst.answers = answers;
    inst.gold = static_cast<int>(i % answers.size());
    s.instances.push_back(std::move(inst));
  }
  s.sonar.max_hop = 2;
  return s;
}

std::vector<sketch::InstanceInput> overfit_inputs(const OverfitSet& set, bool drop_knowledge) {
  const auto records =
      harness::extract_dataset(set.instances, *set.graph, set.embeddings, set.words, set.sonar);
  std::map<std::string, sonar::GroundedCandidate> by_id;
  for (const auto& r : records) by_id.emplace(r.id, r);
  return harness::build_inputs(set.instances, by_id, harness::stub_encodings(set.seed, set.dims.d_h),
                               *set.graph, harness::InputOptions{drop_knowledge});
}

double mean_tail_rank(const KnowledgeGraph& g, const KgEmbeddings& emb) {
  auto dist = [&](ConceptId h, RelationId r, std::uint32_t t) {
    double s = 0;
    for (std::size_t k = 0; k < emb.concepts.dim(); ++k) {
      const double d = emb.concepts.row(h.value)[k] + emb.relations.row(r.value)[k] -
                       emb.concepts.row(t)[k];
      s += d * d;
    }
    return std::sqrt(s);
  };
  double total = 0;
  for (const auto& tr : g.triples()) {
    const double truth = dist(tr.head, tr.rel, tr.tail.value);
    std::size_t rank = 1;
    for (std::uint32_t c = 0; c < g.concept_count(); ++c) {
      if (c != tr.tail.value && dist(tr.head, tr.rel, c) < truth) ++rank;
    }
    total += static_cast<double>(rank);
  }
  return total / static_cast<double>(g.triples().size());
}

}  // namespace seekqa::testing
