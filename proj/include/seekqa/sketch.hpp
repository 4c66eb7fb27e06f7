// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seekqa/autodiff.hpp"
#include "seekqa/kge.hpp"

namespace seekqa::sketch {

struct ModelDims {
  std::size_t d_h = 1024;   // contextual encoder
  std::size_t d_g = 100;    // graph hidden, equals concept embedding dim
  std::size_t d_r = 100;    // relation embedding dim
  std::size_t d_gru = 150;  // per direction
  std::size_t d_a = 100;    // bilinear attention
  std::size_t d_k = 100;    // output of the knowledge feed-forward layers
  std::size_t gat_layers = 2;

  std::size_t d_u() const { return 2 * d_gru; }
  std::size_t gru_input() const { return 2 * d_g + d_r; }
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// Model variants used for ablations.
struct ModelOptions {
  bool no_sls = false;  // uniform weights within each path group
  bool no_sus = false;  // uniform weights over concept pairs
  bool train_relations = false;
  bool operator==(const ModelOptions&) const = default;
};

/// Applies one ablation flag: "gat_layers=N" (N in 0..3), "no_sls" or
/// "no_sus". Throws UsageError on anything else.
void apply_ablation(std::string_view flag, ModelDims& dims, ModelOptions& opts);

// ---------------------------------------------------------------------------
// Prepared inputs. Node indices are local to one candidate's subgraph.

/// A relation vector is a base row of the relation table, negated when the
/// edge is traversed backwards.
struct RelationRef {
  std::uint32_t row = 0;
  bool inverse = false;
  auto operator<=>(const RelationRef&) const = default;
};

struct Neighbor {
  std::uint32_t node = 0;
  RelationRef rel;
};

struct PathInput {
  std::vector<std::uint32_t> nodes;   // hops + 1
  std::vector<RelationRef> relations; // hops
};

struct GroupInput {
  std::uint32_t question_node = 0;
  std::uint32_t answer_node = 0;
  std::vector<double> question_context;  // h_m^c
  std::vector<double> answer_context;    // h_n^c
  std::vector<PathInput> paths;          // non-empty
};

struct CandidateInput {
  std::vector<std::uint32_t> node_concepts;        // concept table row per node
  std::vector<std::vector<Neighbor>> adjacency;    // per node, both directions
  std::vector<GroupInput> groups;
  std::vector<std::uint32_t> answer_nodes;
  std::vector<double> h0;
};

struct InstanceInput {
  std::string id;
  std::vector<CandidateInput> candidates;
  int gold = -1;
};

// ---------------------------------------------------------------------------
// Parameters

struct GatLayerParams {
  ad::Parameter* W_r;
  ad::Parameter* W1;
  ad::Parameter* W2;
  ad::Parameter* W_o;
};

struct GruParams {
  ad::Parameter *W_z, *W_r, *W_h, *U_z, *U_r, *U_h, *b_z, *b_r, *b_h;
};

struct FeedForwardParams {
  ad::Parameter* W;
  ad::Parameter* b;
};

/// Every trainable tensor, stored in declaration order (the checkpoint
/// order).
class ModelParams {
 public:
  ModelParams(const ModelDims& dims, const ModelOptions& opts, std::size_t relation_rows);
  ModelParams(const ModelParams& other);
  ModelParams& operator=(const ModelParams& other);

  std::vector<ad::Parameter>& all() { return params_; }
  const std::vector<ad::Parameter>& all() const { return params_; }
  ad::Parameter& get(std::string_view name);
  const ad::Parameter& get(std::string_view name) const;

  void xavier_init(std::uint64_t seed);
  void zero_grad();
  std::size_t scalar_count() const;

  std::vector<GatLayerParams> gat;
  GruParams gru_fwd{}, gru_bwd{};
  ad::Parameter *W3{}, *W4{}, *W5{}, *W6{};
  FeedForwardParams F_knowledge{}, F_fuse{}, F_context{};
  ad::Parameter* W_z{};
  FeedForwardParams mlp_hidden{}, mlp_out{};
  ad::Parameter* relations{};  // only with train_relations

 private:
  void declare(const ModelDims& dims, const ModelOptions& opts, std::size_t relation_rows);
  void rebind();
  ad::Parameter& add(std::string name, std::size_t rows, std::size_t cols);

  std::vector<ad::Parameter> params_;
};

// ---------------------------------------------------------------------------
// Stage operations on a tape. Each is usable on its own for testing.

/// Parameters bound to one tape.
struct BoundGat {
  ad::Var W_r, W1, W2, W_o;
};
struct BoundGru {
  ad::Var W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h;
};
struct BoundFeedForward {
  ad::Var W, b;
};

BoundGat bind(ad::Tape& t, const GatLayerParams& p);
BoundGru bind(ad::Tape& t, const GruParams& p);
BoundFeedForward bind(ad::Tape& t, const FeedForwardParams& p);

/// Neighbor with its relation vector already on the tape.
struct BoundNeighbor {
  std::uint32_t node;
  ad::Var rel;
};

/// Relation-aware graph attention layer. For node j with neighbors j':
///   logit_j' = (W_r r_jj')^T tanh(W1 h_j + W2 h_j'),  alpha = softmax(logit)
///   out_j = tanh(W_o * sum_j' alpha_j' [h_j; h_j'])
/// A node without neighbors uses out_j = tanh(W_o [h_j; h_j]).
/// `attention`, when given, receives alpha per node (empty for isolated nodes).
std::vector<ad::Var> rgat_layer(ad::Tape& t, std::span<const ad::Var> nodes,
                                const std::vector<std::vector<BoundNeighbor>>& adjacency,
                                const BoundGat& p,
                                std::vector<std::vector<double>>* attention = nullptr);

/// One reset-before-candidate GRU step:
///   z = sig(W_z x + U_z h + b_z), r = sig(W_r x + U_r h + b_r)
///   c = tanh(W_h x + U_h (r * h) + b_h),  h' = z * h + (1 - z) * c
ad::Var gru_step(ad::Tape& t, const BoundGru& p, ad::Var x, ad::Var h);

/// BiGRU over step inputs [h_j; r_j; h_{j+1}], mean-pooled over positions of
/// the concatenated forward/backward states. Zero initial states.
ad::Var encode_path(ad::Tape& t, std::span<const ad::Var> path_nodes,
                    std::span<const ad::Var> relation_vecs, const BoundGru& fwd,
                    const BoundGru& bwd, std::size_t d_gru);

/// Semantic link strength: alpha_k = (W3 [h_m^c; h_n^c])^T (W4 u_k), softmax
/// within the group (uniform when `uniform`), returns sum_k beta_k u_k.
ad::Var link_strength_fuse(ad::Tape& t, ad::Var question_context, ad::Var answer_context,
                           std::span<const ad::Var> path_reps, ad::Var W3, ad::Var W4,
                           bool uniform, ad::Var* weights_out = nullptr);

struct PairFeatures {
  ad::Var graph_q;    // h_m^g
  ad::Var graph_a;    // h_n^g
  ad::Var context_q;  // h_m^c
  ad::Var context_a;  // h_n^c
};

/// Semantic union strength weights over concept pairs:
///   alpha_k' = (W5 h0)^T (W6 [h_m^g; h_n^g; h_m^c; h_n^c]), softmax over pairs.
ad::Var union_strength(ad::Tape& t, ad::Var h0, std::span<const PairFeatures> pairs, ad::Var W5,
                       ad::Var W6, bool uniform);

/// F(x) = tanh(W x + b)
ad::Var feed_forward(ad::Tape& t, const BoundFeedForward& f, ad::Var x);

/// V^k = sum_k' beta_k' F([h_m^g; h_n^g; U_k']).
ad::Var knowledge_rep(ad::Tape& t, ad::Var union_weights, std::span<const PairFeatures> pairs,
                      std::span<const ad::Var> group_reps, const BoundFeedForward& f);

/// Mean of the answer concepts' graph representations; zero when none.
ad::Var answer_rep(ad::Tape& t, std::span<const ad::Var> answer_nodes, std::size_t d_g);

struct GateOutput {
  ad::Var I;
  ad::Var z;
};

/// V = F_fuse([V^k; V^a]), z = sig(W_z [h0; V]), I = z F_context(h0) + (1 - z) V.
GateOutput selective_gate(ad::Tape& t, ad::Var h0, ad::Var knowledge, ad::Var answer,
                          const BoundFeedForward& fuse, const BoundFeedForward& context,
                          ad::Var W_z);

/// MLP(I) = W_out tanh(W_hidden I + b_hidden) + b_out, a scalar.
ad::Var mlp_score(ad::Tape& t, ad::Var I, const BoundFeedForward& hidden,
                  const BoundFeedForward& out);

/// Softmax over candidate scores.
std::vector<double> candidate_probabilities(std::span<const double> scores);

/// Index of the largest probability; ties go to the lowest index.
std::size_t argmax(std::span<const double> probs);

// ---------------------------------------------------------------------------

/// Intermediate values for one candidate, for inspection and tests.
struct CandidateTrace {
  std::vector<std::vector<double>> initial_nodes;
  std::vector<std::vector<double>> graph_nodes;           // final h^g
  std::vector<std::vector<std::vector<double>>> gat_attention;  // [layer][node]
  std::vector<std::vector<double>> link_weights;          // per group
  std::vector<double> union_weights;
  std::vector<double> knowledge;  // V^k
  std::vector<double> answer;     // V^a
  double gate = 0;
  std::vector<double> integrated;  // I
  double score = 0;
};

struct Prediction {
  std::vector<double> scores;
  std::vector<double> probabilities;
  std::size_t predicted = 0;
};

class SketchModel {
 public:
  /// `concepts` holds TransE concept rows; `relations` holds base relation
  /// rows only. Both are frozen inputs; with train_relations the relation
  /// rows seed a trainable copy.
  SketchModel(ModelDims dims, ModelOptions opts, std::shared_ptr<const EmbeddingTable> concepts,
              std::shared_ptr<const EmbeddingTable> relations, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  const ModelOptions& options() const { return opts_; }
  std::uint64_t seed() const { return seed_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// Records the forward pass of one candidate and returns its scalar score.
  /// Takes non-const params because the tape binds gradient sinks.
  ad::Var score_candidate(ad::Tape& t, const CandidateInput& c, CandidateTrace* trace = nullptr);

  Prediction predict(const InstanceInput& inst);

  /// Mean cross entropy over the batch without touching gradients.
  double loss(std::span<const InstanceInput> batch);
  /// Zeroes gradients, runs forward and backward, returns the mean loss.
  double loss_and_grad(std::span<const InstanceInput> batch);

  /// Header (magic, dims, options, seed) then named tensors in declaration
  /// order as little-endian float64.
  void save(std::ostream& out) const;
  static SketchModel load(std::istream& in, std::shared_ptr<const EmbeddingTable> concepts,
                          std::shared_ptr<const EmbeddingTable> relations);

 private:
  struct Bound;
  Bound bind_all(ad::Tape& t);
  ad::Var relation_vector(ad::Tape& t, Bound& b, RelationRef r);
  void check_input(const CandidateInput& c) const;

  ModelDims dims_;
  ModelOptions opts_;
  std::shared_ptr<const EmbeddingTable> concepts_;
  std::shared_ptr<const EmbeddingTable> relations_;
  std::uint64_t seed_;
  ModelParams params_;
};

}  // namespace seekqa::sketch
