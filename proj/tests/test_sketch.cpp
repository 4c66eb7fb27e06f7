// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "seekqa/error.hpp"
#include "seekqa/sketch.hpp"
#include "support.hpp"

namespace seekqa::sketch {
namespace {

using Vec = std::vector<double>;
using ad::Parameter;
using ad::Tape;
using ad::Var;

// Plain-double reference helpers.

Vec mv(const Parameter& m, const Vec& x) {
  Vec y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t k = 0; k < m.cols; ++k) y[i] += m.value[i * m.cols + k] * x[k];
  }
  return y;
}
Vec cat(std::initializer_list<Vec> parts) {
  Vec out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}
Vec vtanh(Vec v) {
  for (double& x : v) x = std::tanh(x);
  return v;
}
double dot(const Vec& a, const Vec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }
Vec softmax(const Vec& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  Vec p(v.size());
  double s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += p[i] = std::exp(v[i] - mx);
  for (double& x : p) x /= s;
  return p;
}
Vec add(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}
Vec scaled(Vec a, double s) {
  for (double& x : a) x *= s;
  return a;
}

Vec random_vec(Rng& rng, std::size_t n) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}
void randomize(Rng& rng, Parameter& p) {
  for (double& x : p.value) x = rng.uniform(-0.8, 0.8);
}
void expect_near(const Vec& got, const Vec& want, double tol = 1e-12) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

TEST(RgatLayer, MatchesDenseReference) {
  Rng rng(3);
  const std::size_t dg = 3, dr = 2, da = 4;
  Parameter W_r("W_r", da, dr), W1("W1", da, dg), W2("W2", da, dg), W_o("W_o", dg, 2 * dg);
  for (Parameter* p : {&W_r, &W1, &W2, &W_o}) randomize(rng, *p);
  const std::vector<Vec> h = {random_vec(rng, dg), random_vec(rng, dg), random_vec(rng, dg), random_vec(rng, dg)};
  const std::vector<Vec> rel = {random_vec(rng, dr), random_vec(rng, dr)};
  // node 3 is isolated
  const std::vector<std::vector<std::pair<std::uint32_t, std::size_t>>> adj = {
      {{1, 0}, {2, 1}}, {{0, 0}, {2, 0}, {2, 1}}, {{1, 1}}, {}};

  Tape t;
  const GatLayerParams lp{&W_r, &W1, &W2, &W_o};
  const BoundGat bg = bind(t, lp);
  std::vector<Var> nodes;
  for (const auto& v : h) nodes.push_back(t.constant(v));
  std::vector<Var> rels = {t.constant(rel[0]), t.constant(rel[1])};
  std::vector<std::vector<BoundNeighbor>> badj(adj.size());
  for (std::size_t j = 0; j < adj.size(); ++j) {
    for (auto [n, r] : adj[j]) badj[j].push_back({n, rels[r]});
  }
  std::vector<std::vector<double>> attention;
  const auto out = rgat_layer(t, nodes, badj, bg, &attention);

  for (std::size_t j = 0; j < adj.size(); ++j) {
    if (adj[j].empty()) {
      expect_near(t.value(out[j]), vtanh(mv(W_o, cat({h[j], h[j]}))));
      EXPECT_TRUE(attention[j].empty());
      continue;
    }
    Vec logits;
    for (auto [n, r] : adj[j]) {
      logits.push_back(dot(mv(W_r, rel[r]), vtanh(add(mv(W1, h[j]), mv(W2, h[n])))));
    }
    const Vec alpha = softmax(logits);
    expect_near(attention[j], alpha);
    Vec msg(2 * dg, 0.0);
    for (std::size_t k = 0; k < adj[j].size(); ++k) msg = add(msg, scaled(cat({h[j], h[adj[j][k].first]}), alpha[k]));
    expect_near(t.value(out[j]), vtanh(mv(W_o, msg)));
  }
}

TEST(GruStep, ScalarReference) {
  Parameter W_z("W_z", 1, 1), W_r("W_r", 1, 1), W_h("W_h", 1, 1), U_z("U_z", 1, 1), U_r("U_r", 1, 1),
      U_h("U_h", 1, 1), b_z("b_z", 1, 1), b_r("b_r", 1, 1), b_h("b_h", 1, 1);
  W_z.value = {0.5};
  U_z.value = {-0.3};
  b_z.value = {0.1};
  W_r.value = {0.2};
  U_r.value = {0.7};
  b_r.value = {-0.2};
  W_h.value = {1.1};
  U_h.value = {-0.4};
  b_h.value = {0.05};
  const double x = 0.8, h = -0.6;
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const double z = sig(0.5 * x - 0.3 * h + 0.1);
  const double r = sig(0.2 * x + 0.7 * h - 0.2);
  const double c = std::tanh(1.1 * x - 0.4 * (r * h) + 0.05);
  const double want = z * h + (1 - z) * c;

  Tape t;
  const BoundGru g = bind(t, GruParams{&W_z, &W_r, &W_h, &U_z, &U_r, &U_h, &b_z, &b_r, &b_h});
  EXPECT_NEAR(t.scalar(gru_step(t, g, t.constant({x}), t.constant({h}))), want, 1e-15);
}

TEST(EncodePath, ZeroWeightsGiveZeroRepresentation) {
  const auto dims = testing::toy_dims();
  ModelParams params(dims, {}, 4);  // all zeros before init
  Tape t;
  Rng rng(1);
  std::vector<Var> nodes = {t.constant(random_vec(rng, dims.d_g)), t.constant(random_vec(rng, dims.d_g)),
                            t.constant(random_vec(rng, dims.d_g))};
  std::vector<Var> rels = {t.constant(random_vec(rng, dims.d_r)), t.constant(random_vec(rng, dims.d_r))};
  const Var u = encode_path(t, nodes, rels, bind(t, params.gru_fwd), bind(t, params.gru_bwd), dims.d_gru);
  EXPECT_EQ(t.value(u), Vec(dims.d_u(), 0.0));
  EXPECT_THROW(encode_path(t, nodes, {}, bind(t, params.gru_fwd), bind(t, params.gru_bwd), dims.d_gru),
               UsageError);
}

TEST(LinkStrength, SoftmaxOverPathsAndUniformAblation) {
  Rng rng(4);
  Parameter W3("W3", 3, 4), W4("W4", 3, 2);
  randomize(rng, W3);
  randomize(rng, W4);
  const Vec hq = random_vec(rng, 2), ha = random_vec(rng, 2);
  const std::vector<Vec> u = {random_vec(rng, 2), random_vec(rng, 2), random_vec(rng, 2)};
  Vec logits;
  for (const auto& uk : u) logits.push_back(dot(mv(W3, cat({hq, ha})), mv(W4, uk)));
  const Vec beta = softmax(logits);
  Vec want(2, 0.0);
  for (std::size_t k = 0; k < 3; ++k) want = add(want, scaled(u[k], beta[k]));

  Tape t;
  std::vector<Var> reps;
  for (const auto& uk : u) reps.push_back(t.constant(uk));
  Var w;
  const Var fused = link_strength_fuse(t, t.constant(hq), t.constant(ha), reps, t.param(W3), t.param(W4), false, &w);
  expect_near(t.value(fused), want);
  expect_near(t.value(w), beta);

  const Var uniform = link_strength_fuse(t, t.constant(hq), t.constant(ha), reps, t.param(W3), t.param(W4), true, &w);
  expect_near(t.value(uniform), scaled(add(add(u[0], u[1]), u[2]), 1.0 / 3));
  EXPECT_THROW(link_strength_fuse(t, t.constant(hq), t.constant(ha), {}, t.param(W3), t.param(W4), false),
               UsageError);
}

TEST(UnionStrength, AndKnowledgeRepresentation) {
  Rng rng(5);
  const std::size_t dg = 2, dh = 3, du = 2, dk = 3;
  Parameter W5("W5", 2, dh), W6("W6", 2, 2 * dg + 2 * dh), FW("F.W", dk, 2 * dg + du), Fb("F.b", dk, 1);
  for (Parameter* p : {&W5, &W6, &FW, &Fb}) randomize(rng, *p);
  const Vec h0 = random_vec(rng, dh);
  struct RawPair {
    Vec gq, ga, cq, ca, U;
  };
  std::vector<RawPair> raw;
  for (int k = 0; k < 3; ++k) {
    raw.push_back({random_vec(rng, dg), random_vec(rng, dg), random_vec(rng, dh), random_vec(rng, dh), random_vec(rng, du)});
  }
  Vec logits;
  for (const auto& p : raw) logits.push_back(dot(mv(W5, h0), mv(W6, cat({p.gq, p.ga, p.cq, p.ca}))));
  const Vec beta = softmax(logits);
  Vec want(dk, 0.0);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    want = add(want, scaled(vtanh(add(mv(FW, cat({raw[k].gq, raw[k].ga, raw[k].U})), Fb.value)), beta[k]));
  }

  Tape t;
  std::vector<PairFeatures> pairs;
  std::vector<Var> groups;
  for (const auto& p : raw) {
    pairs.push_back({t.constant(p.gq), t.constant(p.ga), t.constant(p.cq), t.constant(p.ca)});
    groups.push_back(t.constant(p.U));
  }
  const Var w = union_strength(t, t.constant(h0), pairs, t.param(W5), t.param(W6), false);
  expect_near(t.value(w), beta);
  const Var vk = knowledge_rep(t, w, pairs, groups, bind(t, FeedForwardParams{&FW, &Fb}));
  expect_near(t.value(vk), want);
  expect_near(t.value(union_strength(t, t.constant(h0), pairs, t.param(W5), t.param(W6), true)), Vec(3, 1.0 / 3));
  EXPECT_THROW(union_strength(t, t.constant(h0), {}, t.param(W5), t.param(W6), false), UsageError);
}

TEST(AnswerRep, MeanOrZero) {
  Tape t;
  const std::vector<Var> nodes = {t.constant({1.0, 2.0}), t.constant({3.0, -2.0})};
  expect_near(t.value(answer_rep(t, nodes, 2)), {2.0, 0.0});
  expect_near(t.value(answer_rep(t, {}, 2)), {0.0, 0.0});
}

TEST(SelectiveGate, SaturatesToEitherBranch) {
  Rng rng(6);
  const std::size_t dh = 2, dk = 3, dg = 2;
  Parameter fW("fuse.W", dk, dk + dg), fb("fuse.b", dk, 1), cW("ctx.W", dk, dh), cb("ctx.b", dk, 1), Wz("W_z", 1, dh + dk);
  for (Parameter* p : {&fW, &fb, &cW, &cb}) randomize(rng, *p);
  const Vec h0 = {1.0, 0.0}, vk = random_vec(rng, dk), va = random_vec(rng, dg);
  const Vec context = vtanh(add(mv(cW, h0), cb.value));
  const Vec v = vtanh(add(mv(fW, cat({vk, va})), fb.value));
  for (double logit : {30.0, -30.0, 0.0}) {
    std::fill(Wz.value.begin(), Wz.value.end(), 0.0);
    Wz.value[0] = logit;  // h0[0] == 1, so this is the gate logit
    Tape t;
    const auto g = selective_gate(t, t.constant(h0), t.constant(vk), t.constant(va),
                                  bind(t, FeedForwardParams{&fW, &fb}), bind(t, FeedForwardParams{&cW, &cb}), t.param(Wz));
    const double z = 1 / (1 + std::exp(-logit));
    EXPECT_NEAR(t.scalar(g.z), z, 1e-15);
    expect_near(t.value(g.I), add(scaled(context, z), scaled(v, 1 - z)));
    if (logit > 0) expect_near(t.value(g.I), context, 1e-12);
    if (logit < 0) expect_near(t.value(g.I), v, 1e-12);
  }
}

TEST(CandidateProbabilities, SoftmaxAndArgmaxTies) {
  const Vec p = candidate_probabilities(Vec{0, 0, 0, 0, 0});
  for (double x : p) EXPECT_DOUBLE_EQ(x, 0.2);
  EXPECT_EQ(argmax(p), 0u);
  EXPECT_EQ(argmax(Vec{0.1, 0.4, 0.4, 0.1}), 1u);
  const Vec big = candidate_probabilities(Vec{1000, 1001});
  EXPECT_NEAR(big[1], 1 / (1 + std::exp(-1.0)), 1e-15);
}

CandidateInput permuted(const CandidateInput& c, const std::vector<std::uint32_t>& perm) {
  CandidateInput out = c;
  for (std::size_t j = 0; j < perm.size(); ++j) {
    out.node_concepts[perm[j]] = c.node_concepts[j];
    out.adjacency[perm[j]] = c.adjacency[j];
    for (auto& n : out.adjacency[perm[j]]) n.node = perm[n.node];
  }
  for (auto& g : out.groups) {
    g.question_node = perm[g.question_node];
    g.answer_node = perm[g.answer_node];
    for (auto& p : g.paths) {
      for (auto& v : p.nodes) v = perm[v];
    }
  }
  for (auto& a : out.answer_nodes) a = perm[a];
  return out;
}

TEST(SketchModel, ScoreInvariantUnderNodeRelabeling) {
  const auto dims = testing::toy_dims();
  auto problem = testing::toy_problem(12, dims, 1);
  SketchModel model(dims, {}, problem.concepts, problem.relations, 12);
  Rng rng(13);
  for (const auto& c : problem.batch[0].candidates) {
    std::vector<std::uint32_t> perm(c.node_concepts.size());
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(perm);
    Tape t1, t2;
    const double a = t1.scalar(model.score_candidate(t1, c));
    const double b = t2.scalar(model.score_candidate(t2, permuted(c, perm)));
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(SketchModel, CandidateOrderPermutesProbabilities) {
  const auto dims = testing::toy_dims();
  auto problem = testing::toy_problem(14, dims, 1);
  SketchModel model(dims, {}, problem.concepts, problem.relations, 14);
  auto inst = problem.batch[0];
  const auto p = model.predict(inst);
  std::reverse(inst.candidates.begin(), inst.candidates.end());
  const auto q = model.predict(inst);
  for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
    EXPECT_NEAR(p.probabilities[i], q.probabilities[p.probabilities.size() - 1 - i], 1e-12);
  }
}

TEST(SketchModel, KnowledgeFreeCandidateIsScored) {
  const auto dims = testing::toy_dims();
  auto problem = testing::toy_problem(15, dims, 1);
  SketchModel model(dims, {}, problem.concepts, problem.relations, 15);
  CandidateInput bare;
  bare.h0 = Vec(dims.d_h, 0.1);
  Tape t;
  CandidateTrace trace;
  const double s = t.scalar(model.score_candidate(t, bare, &trace));
  EXPECT_TRUE(std::isfinite(s));
  EXPECT_EQ(trace.knowledge, Vec(dims.d_k, 0.0));
  EXPECT_EQ(trace.answer, Vec(dims.d_g, 0.0));
}

TEST(SketchModel, RejectsMalformedInput) {
  const auto dims = testing::toy_dims();
  auto problem = testing::toy_problem(16, dims, 1);
  SketchModel model(dims, {}, problem.concepts, problem.relations, 16);
  auto c = problem.batch[0].candidates[0];
  Tape t;
  auto bad = c;
  bad.h0.pop_back();
  EXPECT_THROW(model.score_candidate(t, bad), DataError);
  bad = c;
  bad.node_concepts[0] = 1000;
  EXPECT_THROW(model.score_candidate(t, bad), DataError);
  bad = c;
  bad.groups[0].paths.clear();
  EXPECT_THROW(model.score_candidate(t, bad), DataError);
  bad = c;
  bad.groups[0].paths[0].relations.push_back({0, false});
  EXPECT_THROW(model.score_candidate(t, bad), DataError);
}

TEST(SketchModel, CheckpointRoundTripIsBitExact) {
  auto dims = testing::toy_dims();
  ModelOptions opts;
  opts.train_relations = true;
  auto problem = testing::toy_problem(17, dims, 2);
  SketchModel model(dims, opts, problem.concepts, problem.relations, 17);
  std::ostringstream out;
  model.save(out);
  std::istringstream in(out.str());
  SketchModel back = SketchModel::load(in, problem.concepts, problem.relations);
  EXPECT_EQ(back.dims(), dims);
  EXPECT_EQ(back.options(), opts);
  EXPECT_EQ(back.seed(), 17u);
  std::ostringstream again;
  back.save(again);
  EXPECT_EQ(again.str(), out.str());
  for (const auto& inst : problem.batch) EXPECT_EQ(model.predict(inst).scores, back.predict(inst).scores);

  std::istringstream truncated(out.str().substr(0, out.str().size() / 2));
  EXPECT_THROW(SketchModel::load(truncated, problem.concepts, problem.relations), DataError);
}

TEST(SketchModel, SameSeedSameParameters) {
  const auto dims = testing::toy_dims();
  auto problem = testing::toy_problem(18, dims, 1);
  SketchModel a(dims, {}, problem.concepts, problem.relations, 5), b(dims, {}, problem.concepts, problem.relations, 5),
      c(dims, {}, problem.concepts, problem.relations, 6);
  EXPECT_EQ(a.params().get("W3").value, b.params().get("W3").value);
  EXPECT_NE(a.params().get("W3").value, c.params().get("W3").value);
}

TEST(Ablations, FlagsAndErrors) {
  ModelDims dims = testing::toy_dims();
  ModelOptions opts;
  apply_ablation("gat_layers=0", dims, opts);
  EXPECT_EQ(dims.gat_layers, 0u);
  apply_ablation("gat_layers=3", dims, opts);
  EXPECT_EQ(dims.gat_layers, 3u);
  apply_ablation("no_sls", dims, opts);
  apply_ablation("no_sus", dims, opts);
  EXPECT_TRUE(opts.no_sls);
  EXPECT_TRUE(opts.no_sus);
  EXPECT_THROW(apply_ablation("gat_layers=4", dims, opts), UsageError);
  EXPECT_THROW(apply_ablation("gat_layers=x", dims, opts), UsageError);
  EXPECT_THROW(apply_ablation("no_everything", dims, opts), UsageError);

  const auto base = testing::toy_dims();
  ModelDims none = base;
  none.gat_layers = 0;
  EXPECT_EQ(ModelParams(base, {}, 4).scalar_count() - ModelParams(none, {}, 4).scalar_count(),
            base.gat_layers * (base.d_a * base.d_r + 2 * base.d_a * base.d_g + 2 * base.d_g * base.d_g));
}

TEST(Ablations, UniformWeightsInTrace) {
  const auto dims = testing::toy_dims();
  auto problem = testing::toy_problem(19, dims, 1);
  ModelOptions opts;
  opts.no_sls = true;
  opts.no_sus = true;
  SketchModel model(dims, opts, problem.concepts, problem.relations, 19);
  Tape t;
  CandidateTrace trace;
  model.score_candidate(t, problem.batch[0].candidates[0], &trace);
  for (const auto& w : trace.link_weights) {
    for (double x : w) EXPECT_DOUBLE_EQ(x, 1.0 / static_cast<double>(w.size()));
  }
  for (double x : trace.union_weights) EXPECT_DOUBLE_EQ(x, 0.5);
}

}  // namespace
}  // namespace seekqa::sketch
