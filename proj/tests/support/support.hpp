// SPDX-License-Identifier: Apache-2.0
// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner.
#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "seekqa/harness.hpp"
#include "seekqa/kge.hpp"
#include "seekqa/kgstore.hpp"
#include "seekqa/rng.hpp"
#include "seekqa/sketch.hpp"
#include "seekqa/sonar.hpp"
#include "seekqa/wordvec.hpp"

namespace seekqa::testing {

/// (relation, head, tail) rows parsed through the tsv3 loader.
KnowledgeGraph graph_from(const std::vector<std::tuple<std::string, std::string, std::string>>& rows);

/// Concepts "c0".."c{nodes-1}" (all interned, so some may be isolated) and
/// relations "r0".."r{relations-1}".
KnowledgeGraph random_graph(Rng& rng, std::size_t nodes, std::size_t edges, std::size_t relations);

/// Simple paths from src to dst with at most max_hop hops, found by a
/// recursive search over the raw triple list. Inverse traversal of base
/// relation r is encoded as r + B.
std::set<sonar::LinkPath> brute_force_paths(const KnowledgeGraph& g, ConceptId src, ConceptId dst,
                                            int max_hop);

EmbeddingTable random_table(Rng& rng, std::size_t rows, std::size_t dim, double scale = 1.0);

/// Dense gradient-check sized model dimensions.
sketch::ModelDims toy_dims();

/// A random candidate over `nodes` local nodes. Every node has at least two
/// neighbors, there are two groups, each with at least two paths, and the
/// answer nodes are non-empty.
sketch::CandidateInput random_candidate(Rng& rng, const sketch::ModelDims& dims,
                                        std::size_t concept_rows, std::size_t relation_rows,
                                        std::size_t nodes = 6);

struct ToyProblem {
  std::shared_ptr<const EmbeddingTable> concepts;
  std::shared_ptr<const EmbeddingTable> relations;
  std::vector<sketch::InstanceInput> batch;
};

/// `instances` five-candidate instances with gold labels.
ToyProblem toy_problem(std::uint64_t seed, const sketch::ModelDims& dims, std::size_t instances = 2);

struct TensorCheck {
  std::string name;
  double relative_error = 0;
  double analytic_norm = 0;
};

/// Central finite differences of the mean batch loss for every scalar of
/// every parameter tensor. Relative error per tensor is
/// |analytic - numeric| / max(|analytic|, |numeric|) over the flattened tensor.
std::vector<TensorCheck> gradient_check(sketch::SketchModel& model,
                                        const std::vector<sketch::InstanceInput>& batch,
                                        double step);

/// Every softmax in a trace, for normalization checks.
std::vector<std::vector<double>> trace_distributions(const sketch::CandidateTrace& trace);

/// 20 questions, each naming its own concept, over five shared answer words.
/// The only knowledge path joins each question concept to its gold answer.
struct OverfitSet {
  std::unique_ptr<KnowledgeGraph> graph;
  KgEmbeddings embeddings;
  WordVectors words;
  std::vector<harness::QAInstance> instances;
  sonar::SonarConfig sonar;
  sketch::ModelDims dims;
  std::uint64_t seed = 0;
};

OverfitSet overfit_set(std::uint64_t seed = 11);

/// Extraction plus stub encodings for the overfit set.
std::vector<sketch::InstanceInput> overfit_inputs(const OverfitSet& set, bool drop_knowledge);

/// Exhaustive rank (1 = best) of the true tail among all concepts, averaged
/// over the graph's triples.
double mean_tail_rank(const KnowledgeGraph& g, const KgEmbeddings& emb);

}  // namespace seekqa::testing
