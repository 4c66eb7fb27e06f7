// SPDX-License-Identifier: Apache-2.0
#include "seekqa/sketch.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>

#include "seekqa/error.hpp"
#include "seekqa/rng.hpp"

namespace seekqa::sketch {

using ad::Var;

void ModelDims::validate() const {
  if (d_h == 0 || d_g == 0 || d_r == 0 || d_gru == 0 || d_a == 0) {
    throw UsageError("model dimensions must be positive");
  }
  if (d_k < 2) throw UsageError("d_k must be at least 2 (the scoring MLP halves it)");
  if (gat_layers > 3) throw UsageError("gat_layers must be in [0, 3]");
}

void apply_ablation(std::string_view flag, ModelDims& dims, ModelOptions& opts) {
  if (flag == "no_sls") {
    opts.no_sls = true;
  } else if (flag == "no_sus") {
    opts.no_sus = true;
  } else if (flag.starts_with("gat_layers=")) {
    const auto v = flag.substr(std::string_view("gat_layers=").size());
    if (v.size() != 1 || v[0] < '0' || v[0] > '3') {
      throw UsageError("gat_layers must be 0, 1, 2 or 3");
    }
    dims.gat_layers = static_cast<std::size_t>(v[0] - '0');
  } else {
    throw UsageError("unknown ablation flag: " + std::string(flag));
  }
}

// ---------------------------------------------------------------------------
// ModelParams

ModelParams::ModelParams(const ModelDims& dims, const ModelOptions& opts, std::size_t relation_rows) {
  dims.validate();
  declare(dims, opts, relation_rows);
  rebind();
}

ModelParams::ModelParams(const ModelParams& other) : params_(other.params_) {
  gat.resize(other.gat.size());
  rebind();
}

ModelParams& ModelParams::operator=(const ModelParams& other) {
  if (this != &other) {
    params_ = other.params_;
    gat.resize(other.gat.size());
    rebind();
  }
  return *this;
}

ad::Parameter& ModelParams::add(std::string name, std::size_t rows, std::size_t cols) {
  params_.emplace_back(std::move(name), rows, cols);
  return params_.back();
}

void ModelParams::declare(const ModelDims& d, const ModelOptions& opts, std::size_t relation_rows) {
  params_.clear();
  for (std::size_t l = 0; l < d.gat_layers; ++l) {
    const std::string p = "gat" + std::to_string(l) + ".";
    add(p + "W_r", d.d_a, d.d_r);
    add(p + "W1", d.d_a, d.d_g);
    add(p + "W2", d.d_a, d.d_g);
    add(p + "W_o", d.d_g, 2 * d.d_g);
  }
  gat.resize(d.gat_layers);
  for (const char* dir : {"gru.fwd.", "gru.bwd."}) {
    const std::string p = dir;
    add(p + "W_z", d.d_gru, d.gru_input());
    add(p + "W_r", d.d_gru, d.gru_input());
    add(p + "W_h", d.d_gru, d.gru_input());
    add(p + "U_z", d.d_gru, d.d_gru);
    add(p + "U_r", d.d_gru, d.d_gru);
    add(p + "U_h", d.d_gru, d.d_gru);
    add(p + "b_z", d.d_gru, 1);
    add(p + "b_r", d.d_gru, 1);
    add(p + "b_h", d.d_gru, 1);
  }
  add("W3", d.d_a, 2 * d.d_h);
  add("W4", d.d_a, d.d_u());
  add("W5", d.d_a, d.d_h);
  add("W6", d.d_a, 2 * d.d_g + 2 * d.d_h);
  add("F_knowledge.W", d.d_k, 2 * d.d_g + d.d_u());
  add("F_knowledge.b", d.d_k, 1);
  add("F_fuse.W", d.d_k, d.d_k + d.d_g);
  add("F_fuse.b", d.d_k, 1);
  add("F_context.W", d.d_k, d.d_h);
  add("F_context.b", d.d_k, 1);
  add("W_z", 1, d.d_h + d.d_k);
  add("mlp.hidden.W", d.d_k / 2, d.d_k);
  add("mlp.hidden.b", d.d_k / 2, 1);
  add("mlp.out.W", 1, d.d_k / 2);
  add("mlp.out.b", 1, 1);
  if (opts.train_relations) add("relations", relation_rows, d.d_r);
}

void ModelParams::rebind() {
  std::size_t i = 0;
  auto next = [&]() { return &params_.at(i++); };
  for (auto& layer : gat) layer = {next(), next(), next(), next()};
  for (GruParams* g : {&gru_fwd, &gru_bwd}) {
    *g = {next(), next(), next(), next(), next(), next(), next(), next(), next()};
  }
  W3 = next();
  W4 = next();
  W5 = next();
  W6 = next();
  F_knowledge = {next(), next()};
  F_fuse = {next(), next()};
  F_context = {next(), next()};
  W_z = next();
  mlp_hidden = {next(), next()};
  mlp_out = {next(), next()};
  relations = i < params_.size() ? next() : nullptr;
}

ad::Parameter& ModelParams::get(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw UsageError("no parameter named " + std::string(name));
}

const ad::Parameter& ModelParams::get(std::string_view name) const {
  return const_cast<ModelParams*>(this)->get(name);
}

void ModelParams::xavier_init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params_) {
    if (&p == relations) continue;
    const auto dot = p.name.rfind('.');
    const bool bias = p.cols == 1 && p.name.compare(dot == std::string::npos ? 0 : dot + 1, 1, "b") == 0;
    if (bias) {
      std::fill(p.value.begin(), p.value.end(), 0.0);
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
    for (double& x : p.value) x = rng.uniform(-bound, bound);
  }
}

void ModelParams::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

// ---------------------------------------------------------------------------
// Stage operations

BoundGat bind(ad::Tape& t, const GatLayerParams& p) {
  return {t.param(*p.W_r), t.param(*p.W1), t.param(*p.W2), t.param(*p.W_o)};
}

BoundGru bind(ad::Tape& t, const GruParams& p) {
  return {t.param(*p.W_z), t.param(*p.W_r), t.param(*p.W_h), t.param(*p.U_z), t.param(*p.U_r),
          t.param(*p.U_h), t.param(*p.b_z), t.param(*p.b_r), t.param(*p.b_h)};
}

BoundFeedForward bind(ad::Tape& t, const FeedForwardParams& p) {
  return {t.param(*p.W), t.param(*p.b)};
}

std::vector<Var> rgat_layer(ad::Tape& t, std::span<const Var> nodes,
                            const std::vector<std::vector<BoundNeighbor>>& adjacency,
                            const BoundGat& p, std::vector<std::vector<double>>* attention) {
  if (adjacency.size() != nodes.size()) throw UsageError("rgat_layer: adjacency size mismatch");
  std::vector<Var> query(nodes.size()), key(nodes.size());
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    query[j] = t.matvec(p.W1, nodes[j]);
    key[j] = t.matvec(p.W2, nodes[j]);
  }
  if (attention) attention->assign(nodes.size(), {});
  std::vector<Var> out(nodes.size());
  std::map<std::uint32_t, Var> projected_rel;  // by tape id
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const auto& nb = adjacency[j];
    if (nb.empty()) {
      out[j] = t.tanh(t.matvec(p.W_o, t.concat({nodes[j], nodes[j]})));
      continue;
    }
    std::vector<Var> logits, messages;
    logits.reserve(nb.size());
    messages.reserve(nb.size());
    for (const auto& n : nb) {
      auto [it, fresh] = projected_rel.try_emplace(n.rel.id);
      if (fresh) it->second = t.matvec(p.W_r, n.rel);
      logits.push_back(t.dot(it->second, t.tanh(t.add(query[j], key[n.node]))));
      messages.push_back(t.concat({nodes[j], nodes[n.node]}));
    }
    const Var alpha = t.softmax(t.concat(logits));
    if (attention) (*attention)[j] = t.value(alpha);
    out[j] = t.tanh(t.matvec(p.W_o, t.weighted_sum(alpha, messages)));
  }
  return out;
}

Var gru_step(ad::Tape& t, const BoundGru& p, Var x, Var h) {
  const Var z = t.sigmoid(t.add(t.add(t.matvec(p.W_z, x), t.matvec(p.U_z, h)), p.b_z));
  const Var r = t.sigmoid(t.add(t.add(t.matvec(p.W_r, x), t.matvec(p.U_r, h)), p.b_r));
  const Var c = t.tanh(t.add(t.add(t.matvec(p.W_h, x), t.matvec(p.U_h, t.mul(r, h))), p.b_h));
  return t.add(t.mul(z, h), t.mul(t.one_minus(z), c));
}

Var encode_path(ad::Tape& t, std::span<const Var> path_nodes, std::span<const Var> relation_vecs,
                const BoundGru& fwd, const BoundGru& bwd, std::size_t d_gru) {
  const std::size_t steps = relation_vecs.size();
  if (steps == 0 || path_nodes.size() != steps + 1) {
    throw UsageError("encode_path: a path needs hops >= 1 and hops + 1 nodes");
  }
  std::vector<Var> inputs(steps);
  for (std::size_t j = 0; j < steps; ++j) {
    inputs[j] = t.concat({path_nodes[j], relation_vecs[j], path_nodes[j + 1]});
  }
  std::vector<Var> forward(steps), backward(steps);
  Var h = t.zeros(d_gru);
  for (std::size_t j = 0; j < steps; ++j) h = forward[j] = gru_step(t, fwd, inputs[j], h);
  h = t.zeros(d_gru);
  for (std::size_t j = steps; j-- > 0;) h = backward[j] = gru_step(t, bwd, inputs[j], h);
  std::vector<Var> states(steps);
  for (std::size_t j = 0; j < steps; ++j) states[j] = t.concat({forward[j], backward[j]});
  return t.mean(states);
}

Var link_strength_fuse(ad::Tape& t, Var question_context, Var answer_context,
                       std::span<const Var> path_reps, Var W3, Var W4, bool uniform,
                       Var* weights_out) {
  if (path_reps.empty()) throw UsageError("link_strength_fuse: empty path group");
  Var weights;
  if (uniform) {
    weights = t.constant(
        std::vector<double>(path_reps.size(), 1.0 / static_cast<double>(path_reps.size())));
  } else {
    const Var pair = t.matvec(W3, t.concat({question_context, answer_context}));
    std::vector<Var> logits;
    logits.reserve(path_reps.size());
    for (Var u : path_reps) logits.push_back(t.dot(pair, t.matvec(W4, u)));
    weights = t.softmax(t.concat(logits));
  }
  if (weights_out) *weights_out = weights;
  return t.weighted_sum(weights, path_reps);
}

Var union_strength(ad::Tape& t, Var h0, std::span<const PairFeatures> pairs, Var W5, Var W6,
                   bool uniform) {
  if (pairs.empty()) throw UsageError("union_strength: no concept pairs");
  if (uniform) {
    return t.constant(std::vector<double>(pairs.size(), 1.0 / static_cast<double>(pairs.size())));
  }
  const Var global = t.matvec(W5, h0);
  std::vector<Var> logits;
  logits.reserve(pairs.size());
  for (const auto& pf : pairs) {
    const Var feat = t.concat({pf.graph_q, pf.graph_a, pf.context_q, pf.context_a});
    logits.push_back(t.dot(global, t.matvec(W6, feat)));
  }
  return t.softmax(t.concat(logits));
}

Var feed_forward(ad::Tape& t, const BoundFeedForward& f, Var x) {
  return t.tanh(t.add(t.matvec(f.W, x), f.b));
}

Var knowledge_rep(ad::Tape& t, Var union_weights, std::span<const PairFeatures> pairs,
                  std::span<const Var> group_reps, const BoundFeedForward& f) {
  if (pairs.size() != group_reps.size() || pairs.empty()) {
    throw UsageError("knowledge_rep: need one group representation per concept pair");
  }
  std::vector<Var> terms;
  terms.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    terms.push_back(feed_forward(t, f, t.concat({pairs[k].graph_q, pairs[k].graph_a, group_reps[k]})));
  }
  return t.weighted_sum(union_weights, terms);
}

Var answer_rep(ad::Tape& t, std::span<const Var> answer_nodes, std::size_t d_g) {
  if (answer_nodes.empty()) return t.zeros(d_g);
  return t.mean(answer_nodes);
}

GateOutput selective_gate(ad::Tape& t, Var h0, Var knowledge, Var answer,
                          const BoundFeedForward& fuse, const BoundFeedForward& context, Var W_z) {
  const Var v = feed_forward(t, fuse, t.concat({knowledge, answer}));
  const Var z = t.sigmoid(t.matvec(W_z, t.concat({h0, v})));
  const Var I = t.add(t.scalar_mul(z, feed_forward(t, context, h0)), t.scalar_mul(t.one_minus(z), v));
  return {I, z};
}

Var mlp_score(ad::Tape& t, Var I, const BoundFeedForward& hidden, const BoundFeedForward& out) {
  const Var h = feed_forward(t, hidden, I);
  return t.add(t.matvec(out.W, h), out.b);
}

std::vector<double> candidate_probabilities(std::span<const double> scores) {
  if (scores.empty()) return {};
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) sum += p[i] = std::exp(scores[i] - mx);
  for (double& x : p) x /= sum;
  return p;
}

std::size_t argmax(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// SketchModel

struct SketchModel::Bound {
  std::vector<BoundGat> gat;
  BoundGru fwd, bwd;
  Var W3, W4, W5, W6;
  BoundFeedForward F_knowledge, F_fuse, F_context, mlp_hidden, mlp_out;
  Var W_z;
  Var relations;
  std::map<RelationRef, Var> relation_cache;
};

SketchModel::SketchModel(ModelDims dims, ModelOptions opts,
                         std::shared_ptr<const EmbeddingTable> concepts,
                         std::shared_ptr<const EmbeddingTable> relations, std::uint64_t seed)
    : dims_(dims),
      opts_(opts),
      concepts_(std::move(concepts)),
      relations_(std::move(relations)),
      seed_(seed),
      params_(dims_, opts_, relations_ ? relations_->rows() : 0) {
  if (!concepts_ || !relations_) throw UsageError("SketchModel needs concept and relation tables");
  if (concepts_->dim() != dims_.d_g) {
    throw DataError("concept embedding dim " + std::to_string(concepts_->dim()) +
                    " must equal d_g " + std::to_string(dims_.d_g));
  }
  if (relations_->dim() != dims_.d_r) {
    throw DataError("relation embedding dim " + std::to_string(relations_->dim()) +
                    " must equal d_r " + std::to_string(dims_.d_r));
  }
  params_.xavier_init(seed_);
  if (params_.relations) {
    std::copy(relations_->data().begin(), relations_->data().end(), params_.relations->value.begin());
  }
}

SketchModel::Bound SketchModel::bind_all(ad::Tape& t) {
  Bound b;
  for (const auto& g : params_.gat) b.gat.push_back(bind(t, g));
  b.fwd = bind(t, params_.gru_fwd);
  b.bwd = bind(t, params_.gru_bwd);
  b.W3 = t.param(*params_.W3);
  b.W4 = t.param(*params_.W4);
  b.W5 = t.param(*params_.W5);
  b.W6 = t.param(*params_.W6);
  b.F_knowledge = bind(t, params_.F_knowledge);
  b.F_fuse = bind(t, params_.F_fuse);
  b.F_context = bind(t, params_.F_context);
  b.W_z = t.param(*params_.W_z);
  b.mlp_hidden = bind(t, params_.mlp_hidden);
  b.mlp_out = bind(t, params_.mlp_out);
  if (params_.relations) b.relations = t.param(*params_.relations);
  return b;
}

Var SketchModel::relation_vector(ad::Tape& t, Bound& b, RelationRef r) {
  auto [it, fresh] = b.relation_cache.try_emplace(r);
  if (!fresh) return it->second;
  if (b.relations.valid()) {
    const Var row = t.row(b.relations, r.row);
    it->second = r.inverse ? t.neg(row) : row;
  } else {
    auto src = relations_->row(r.row);
    std::vector<double> v(src.begin(), src.end());
    if (r.inverse) {
      for (double& x : v) x = -x;
    }
    it->second = t.constant(std::move(v));
  }
  return it->second;
}

void SketchModel::check_input(const CandidateInput& c) const {
  const auto n = c.node_concepts.size();
  if (c.adjacency.size() != n) throw DataError("candidate input: adjacency size mismatch");
  if (c.h0.size() != dims_.d_h) throw DataError("candidate input: h0 has wrong dimension");
  auto check_rel = [&](RelationRef r) {
    if (r.row >= relations_->rows()) throw DataError("candidate input: relation row out of range");
  };
  for (auto row : c.node_concepts) {
    if (row >= concepts_->rows()) throw DataError("candidate input: concept row out of range");
  }
  for (const auto& nb : c.adjacency) {
    for (const auto& e : nb) {
      if (e.node >= n) throw DataError("candidate input: neighbor out of range");
      check_rel(e.rel);
    }
  }
  for (const auto& g : c.groups) {
    if (g.question_node >= n || g.answer_node >= n) throw DataError("candidate input: bad group node");
    if (g.question_context.size() != dims_.d_h || g.answer_context.size() != dims_.d_h) {
      throw DataError("candidate input: context vector has wrong dimension");
    }
    if (g.paths.empty()) throw DataError("candidate input: empty path group");
    for (const auto& p : g.paths) {
      if (p.relations.empty() || p.nodes.size() != p.relations.size() + 1) {
        throw DataError("candidate input: malformed path");
      }
      for (auto v : p.nodes) {
        if (v >= n) throw DataError("candidate input: path node out of range");
      }
      for (auto r : p.relations) check_rel(r);
    }
  }
  for (auto a : c.answer_nodes) {
    if (a >= n) throw DataError("candidate input: answer node out of range");
  }
}

Var SketchModel::score_candidate(ad::Tape& t, const CandidateInput& c, CandidateTrace* trace) {
  check_input(c);
  Bound b = bind_all(t);

  std::vector<Var> h(c.node_concepts.size());
  for (std::size_t j = 0; j < h.size(); ++j) {
    auto row = concepts_->row(c.node_concepts[j]);
    h[j] = t.constant(std::vector<double>(row.begin(), row.end()));
  }
  if (trace) {
    *trace = {};
    for (Var v : h) trace->initial_nodes.push_back(t.value(v));
  }

  std::vector<std::vector<BoundNeighbor>> adjacency(c.adjacency.size());
  for (std::size_t j = 0; j < adjacency.size(); ++j) {
    for (const auto& e : c.adjacency[j]) {
      adjacency[j].push_back({e.node, relation_vector(t, b, e.rel)});
    }
  }
  for (const auto& layer : b.gat) {
    std::vector<std::vector<double>> attention;
    h = rgat_layer(t, h, adjacency, layer, trace ? &attention : nullptr);
    if (trace) trace->gat_attention.push_back(std::move(attention));
  }
  if (trace) {
    for (Var v : h) trace->graph_nodes.push_back(t.value(v));
  }

  std::vector<PairFeatures> pairs;
  std::vector<Var> group_reps;
  for (const auto& g : c.groups) {
    std::vector<Var> reps;
    reps.reserve(g.paths.size());
    for (const auto& p : g.paths) {
      std::vector<Var> nodes, rels;
      for (auto v : p.nodes) nodes.push_back(h[v]);
      for (auto r : p.relations) rels.push_back(relation_vector(t, b, r));
      reps.push_back(encode_path(t, nodes, rels, b.fwd, b.bwd, dims_.d_gru));
    }
    PairFeatures pf{h[g.question_node], h[g.answer_node], t.constant(g.question_context),
                    t.constant(g.answer_context)};
    Var weights;
    group_reps.push_back(
        link_strength_fuse(t, pf.context_q, pf.context_a, reps, b.W3, b.W4, opts_.no_sls, &weights));
    if (trace) trace->link_weights.push_back(t.value(weights));
    pairs.push_back(pf);
  }

  const Var h0 = t.constant(c.h0);
  Var knowledge;
  if (pairs.empty()) {
    knowledge = t.zeros(dims_.d_k);
  } else {
    const Var weights = union_strength(t, h0, pairs, b.W5, b.W6, opts_.no_sus);
    if (trace) trace->union_weights = t.value(weights);
    knowledge = knowledge_rep(t, weights, pairs, group_reps, b.F_knowledge);
  }
  std::vector<Var> answers;
  for (auto a : c.answer_nodes) answers.push_back(h[a]);
  const Var answer = answer_rep(t, answers, dims_.d_g);
  const auto gate = selective_gate(t, h0, knowledge, answer, b.F_fuse, b.F_context, b.W_z);
  const Var score = mlp_score(t, gate.I, b.mlp_hidden, b.mlp_out);
  if (trace) {
    trace->knowledge = t.value(knowledge);
    trace->answer = t.value(answer);
    trace->gate = t.scalar(gate.z);
    trace->integrated = t.value(gate.I);
    trace->score = t.scalar(score);
  }
  return score;
}

Prediction SketchModel::predict(const InstanceInput& inst) {
  ad::Tape t;
  Prediction p;
  for (const auto& c : inst.candidates) p.scores.push_back(t.scalar(score_candidate(t, c)));
  p.probabilities = candidate_probabilities(p.scores);
  p.predicted = argmax(p.probabilities);
  return p;
}

namespace {

Var batch_loss(ad::Tape& t, SketchModel& m, std::span<const InstanceInput> batch) {
  if (batch.empty()) throw UsageError("empty batch");
  std::vector<Var> losses;
  for (const auto& inst : batch) {
    if (inst.gold < 0 || static_cast<std::size_t>(inst.gold) >= inst.candidates.size()) {
      throw DataError("instance " + inst.id + ": gold label missing or out of range");
    }
    std::vector<Var> scores;
    for (const auto& c : inst.candidates) scores.push_back(m.score_candidate(t, c));
    losses.push_back(t.nll(t.concat(scores), static_cast<std::size_t>(inst.gold)));
  }
  return t.mean(losses);
}

constexpr std::array<char, 8> kCheckpointMagic = {'S', 'K', 'E', 'T', 'C', 'H', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 4);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw DataError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

double SketchModel::loss(std::span<const InstanceInput> batch) {
  ad::Tape t;
  return t.scalar(batch_loss(t, *this, batch));
}

double SketchModel::loss_and_grad(std::span<const InstanceInput> batch) {
  params_.zero_grad();
  ad::Tape t;
  const Var l = batch_loss(t, *this, batch);
  t.backward(l);
  return t.scalar(l);
}

void SketchModel::save(std::ostream& out) const {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  for (std::size_t v : {dims_.d_h, dims_.d_g, dims_.d_r, dims_.d_gru, dims_.d_a, dims_.d_k,
                        dims_.gat_layers}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  put_u32(out, (opts_.no_sls ? 1u : 0u) | (opts_.no_sus ? 2u : 0u) | (opts_.train_relations ? 4u : 0u));
  put_u64(out, seed_);
  put_u32(out, static_cast<std::uint32_t>(params_.all().size()));
  for (const auto& p : params_.all()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.rows));
    put_u32(out, static_cast<std::uint32_t>(p.cols));
    for (double x : p.value) put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

SketchModel SketchModel::load(std::istream& in, std::shared_ptr<const EmbeddingTable> concepts,
                              std::shared_ptr<const EmbeddingTable> relations) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw DataError("not a SKETCH checkpoint (bad magic)");
  }
  ModelDims d;
  d.d_h = get_u32(in);
  d.d_g = get_u32(in);
  d.d_r = get_u32(in);
  d.d_gru = get_u32(in);
  d.d_a = get_u32(in);
  d.d_k = get_u32(in);
  d.gat_layers = get_u32(in);
  const auto flags = get_u32(in);
  ModelOptions o{(flags & 1u) != 0, (flags & 2u) != 0, (flags & 4u) != 0};
  const auto seed = get_u64(in);
  SketchModel m(d, o, std::move(concepts), std::move(relations), seed);
  const auto count = get_u32(in);
  if (count != m.params_.all().size()) throw DataError("checkpoint parameter count mismatch");
  for (auto& p : m.params_.all()) {
    const auto len = get_u32(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("checkpoint truncated");
    const auto rows = get_u32(in);
    const auto cols = get_u32(in);
    if (name != p.name || rows != p.rows || cols != p.cols) {
      throw DataError("checkpoint tensor " + name + " does not match expected " + p.name);
    }
    for (double& x : p.value) x = std::bit_cast<double>(get_u64(in));
  }
  return m;
}

}  // namespace seekqa::sketch
