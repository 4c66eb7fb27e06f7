// SPDX-License-Identifier: Apache-2.0
#include "seekqa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "seekqa/error.hpp"
#include "seekqa/rng.hpp"
#include "seekqa/text.hpp"

namespace seekqa::harness {

namespace {

const std::vector<std::string> kDefaultLabels = {"A", "B", "C", "D", "E"};

int label_index(const QAInstance& inst, const std::string& key) {
  for (std::size_t i = 0; i < inst.labels.size(); ++i) {
    if (inst.labels[i] == key) return static_cast<int>(i);
  }
  throw DataError("instance " + inst.id + ": answer key '" + key + "' names no candidate");
}

void check_instance(const QAInstance& inst) {
  if (inst.answers.size() != kCandidateCount) {
    throw DataError("instance " + inst.id + ": expected " + std::to_string(kCandidateCount) +
                    " candidates, got " + std::to_string(inst.answers.size()));
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "commonsenseqa_jsonl" || name == "jsonl") return DatasetFormat::commonsenseqa_jsonl;
  if (name == "simple_tsv" || name == "tsv") return DatasetFormat::simple_tsv;
  throw UsageError("unknown dataset format: " + std::string(name));
}

std::vector<QAInstance> load_dataset(std::istream& in, DatasetFormat format) {
  std::vector<QAInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    QAInstance inst;
    if (format == DatasetFormat::commonsenseqa_jsonl) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        inst.id = j.at("id").get<std::string>();
        const auto& q = j.at("question");
        inst.question = q.at("stem").get<std::string>();
        for (const auto& c : q.at("choices")) {
          inst.labels.push_back(c.at("label").get<std::string>());
          inst.answers.push_back(c.at("text").get<std::string>());
        }
      } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset line " + std::to_string(line_no) +
                        (inst.id.empty() ? "" : " (id " + inst.id + ")") + ": " + e.what());
      }
      check_instance(inst);
      if (j.contains("answerKey") && !j["answerKey"].is_null()) {
        inst.gold = label_index(inst, j["answerKey"].get<std::string>());
      }
    } else {
      if (line.starts_with('#')) continue;
      const auto f = split_tabs(line);
      inst.id = f[0];
      if (f.size() != 7 && f.size() != 8) {
        throw DataError("instance " + inst.id + " (line " + std::to_string(line_no) +
                        "): expected id, stem, 5 candidates and an optional key; got " +
                        std::to_string(f.size()) + " fields");
      }
      inst.question = f[1];
      inst.labels = kDefaultLabels;
      inst.answers.assign(f.begin() + 2, f.begin() + 7);
      if (f.size() == 8 && !f[7].empty()) inst.gold = label_index(inst, f[7]);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::pair<std::vector<QAInstance>, std::vector<QAInstance>> split_dev(
    std::vector<QAInstance> instances, double first_fraction, std::uint64_t seed) {
  if (!(first_fraction >= 0.0 && first_fraction <= 1.0)) {
    throw UsageError("split fraction must be in [0, 1]");
  }
  Rng rng(seed);
  rng.shuffle(instances);
  const auto cut = static_cast<std::size_t>(
      std::llround(first_fraction * static_cast<double>(instances.size())));
  std::vector<QAInstance> second(std::make_move_iterator(instances.begin() + static_cast<std::ptrdiff_t>(cut)),
                                 std::make_move_iterator(instances.end()));
  instances.resize(cut);
  return {std::move(instances), std::move(second)};
}

std::string candidate_key(const QAInstance& inst, std::size_t candidate) {
  return inst.id + "/" + std::to_string(candidate);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const auto i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<sonar::GroundedCandidate> extract_dataset(std::span<const QAInstance> instances,
                                                      const KnowledgeGraph& g,
                                                      const KgEmbeddings& emb,
                                                      const WordVectors& wv,
                                                      const sonar::SonarConfig& cfg,
                                                      std::size_t threads) {
  std::vector<sonar::GroundedCandidate> out(instances.size() * kCandidateCount);
  parallel_for(out.size(), threads, [&](std::size_t k) {
    const auto& inst = instances[k / kCandidateCount];
    const auto c = k % kCandidateCount;
    out[k] = sonar::extract_candidate(candidate_key(inst, c), inst.question, inst.answers[c], g, emb,
                                      wv, cfg);
  });
  return out;
}

sketch::CandidateInput build_candidate_input(const sonar::GroundedCandidate& grounded,
                                             const encoder::ContextualEncoding& enc,
                                             const QAInstance& inst, std::size_t candidate,
                                             const KnowledgeGraph& g, const InputOptions& opts) {
  sketch::CandidateInput in;
  in.h0 = enc.h0;
  if (opts.drop_knowledge) return in;

  const auto& nodes = grounded.subgraph.nodes;
  auto local = [&](ConceptId c) -> std::optional<std::uint32_t> {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), c);
    if (it == nodes.end() || *it != c) return std::nullopt;
    return static_cast<std::uint32_t>(it - nodes.begin());
  };
  auto require_local = [&](ConceptId c) {
    auto l = local(c);
    if (!l) {
      throw DataError("record " + grounded.id + ": path concept '" + g.concept_name(c) +
                      "' missing from subgraph");
    }
    return *l;
  };
  auto rel_ref = [&](RelationId r) {
    return sketch::RelationRef{g.base(r).value, g.is_inverse(r)};
  };

  for (ConceptId c : nodes) in.node_concepts.push_back(c.value);
  in.adjacency.resize(nodes.size());
  for (const auto& e : grounded.subgraph.edges) {
    const auto h = require_local(e.head);
    const auto t = require_local(e.tail);
    in.adjacency[h].push_back({t, {e.rel.value, false}});
    in.adjacency[t].push_back({h, {e.rel.value, true}});
  }

  const auto q_tokens = text::tokenize(inst.question);
  const auto a_tokens = text::tokenize(inst.answers.at(candidate));
  auto span_of = [&](ConceptId c, const std::vector<sonar::GroundedConcept>& list,
                     const std::vector<std::string>& tokens, bool in_answer) {
    for (const auto& gc : list) {
      if (gc.id == c) {
        return encoder::resolve_span(enc, tokens, {gc.begin, gc.end}, in_answer, q_tokens.size());
      }
    }
    throw DataError("record " + grounded.id + ": group concept '" + g.concept_name(c) +
                    "' was not grounded");
  };

  for (const auto& grp : grounded.groups) {
    if (grp.paths.empty()) continue;
    sketch::GroupInput gi;
    gi.question_node = require_local(grp.source);
    gi.answer_node = require_local(grp.target);
    gi.question_context = encoder::concept_context_rep(
        enc, span_of(grp.source, grounded.question_concepts, q_tokens, false));
    gi.answer_context = encoder::concept_context_rep(
        enc, span_of(grp.target, grounded.answer_concepts, a_tokens, true));
    for (const auto& sp : grp.paths) {
      sketch::PathInput p;
      for (ConceptId c : sp.path.concepts) p.nodes.push_back(require_local(c));
      for (RelationId r : sp.path.relations) p.relations.push_back(rel_ref(r));
      gi.paths.push_back(std::move(p));
    }
    in.groups.push_back(std::move(gi));
  }
  for (const auto& ac : grounded.answer_concepts) {
    if (auto l = local(ac.id)) in.answer_nodes.push_back(*l);
  }
  return in;
}

EncodingSource stub_encodings(std::uint64_t seed, std::size_t d_h) {
  return [seed, d_h](const QAInstance& inst, std::size_t c) {
    return encoder::stub_encode(candidate_key(inst, c), inst.question, inst.answers.at(c), seed, d_h);
  };
}

EncodingSource file_encodings(std::map<std::string, encoder::ContextualEncoding> encodings) {
  auto shared = std::make_shared<const std::map<std::string, encoder::ContextualEncoding>>(
      std::move(encodings));
  return [shared](const QAInstance& inst, std::size_t c) {
    const auto key = candidate_key(inst, c);
    auto it = shared->find(key);
    if (it == shared->end()) throw DataError("no contextual encoding for " + key);
    return it->second;
  };
}

std::vector<sketch::InstanceInput> build_inputs(
    std::span<const QAInstance> instances,
    const std::map<std::string, sonar::GroundedCandidate>& grounded, const EncodingSource& encodings,
    const KnowledgeGraph& g, const InputOptions& opts) {
  std::vector<sketch::InstanceInput> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    sketch::InstanceInput ii;
    ii.id = inst.id;
    ii.gold = inst.gold;
    for (std::size_t c = 0; c < inst.answers.size(); ++c) {
      const auto key = candidate_key(inst, c);
      auto it = grounded.find(key);
      if (it == grounded.end()) throw DataError("no extraction record for " + key);
      ii.candidates.push_back(build_candidate_input(it->second, encodings(inst, c), inst, c, g, opts));
    }
    out.push_back(std::move(ii));
  }
  return out;
}

// ---------------------------------------------------------------------------

Adam::Adam(sketch::ModelParams& params, const TrainConfig& cfg) : params_(params), cfg_(cfg) {
  for (const auto& p : params_.all()) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& ps = params_.all();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.value[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

TrainLog train(sketch::SketchModel& model, std::span<const sketch::InstanceInput> train_set,
               const TrainConfig& cfg, std::ostream* loss_tsv) {
  if (train_set.empty()) throw DataError("training set is empty");
  if (cfg.batch_size == 0) throw UsageError("batch size must be positive");
  if (cfg.steps < 0) throw UsageError("steps must be non-negative");
  Adam adam(model.params(), cfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t cursor = 0;
  const std::size_t batch_size = std::min(cfg.batch_size, train_set.size());

  TrainLog log;
  if (loss_tsv) *loss_tsv << "step\tloss\tbatch_accuracy\n";
  std::vector<sketch::InstanceInput> batch;
  for (int step = 0; step < cfg.steps; ++step) {
    batch.clear();
    while (batch.size() < batch_size) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(train_set[order[cursor++]]);
    }
    std::size_t correct = 0;
    for (const auto& inst : batch) {
      if (model.predict(inst).predicted == static_cast<std::size_t>(inst.gold)) ++correct;
    }
    const double loss = model.loss_and_grad(batch);
    adam.step();
    log.loss.push_back(loss);
    log.batch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(batch.size()));
    if (loss_tsv) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.6g\n", step + 1, loss, log.batch_accuracy.back());
      *loss_tsv << buf;
    }
  }
  return log;
}

std::vector<InstancePrediction> predict_all(sketch::SketchModel& model,
                                            std::span<const sketch::InstanceInput> instances,
                                            std::size_t threads) {
  std::vector<InstancePrediction> out(instances.size());
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    auto p = model.predict(instances[i]);
    out[i] = {instances[i].id, p.predicted, std::move(p.probabilities)};
  });
  return out;
}

Evaluation evaluate(sketch::SketchModel& model, std::span<const sketch::InstanceInput> instances,
                    std::size_t threads) {
  for (const auto& inst : instances) {
    if (inst.gold < 0) throw DataError("instance " + inst.id + " has no gold answer");
  }
  Evaluation ev;
  ev.predictions = predict_all(model, instances, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (ev.predictions[i].predicted == static_cast<std::size_t>(instances[i].gold)) ++correct;
  }
  ev.accuracy = instances.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(instances.size());
  return ev;
}

void write_predictions(std::ostream& out, std::span<const InstancePrediction> preds,
                       std::span<const QAInstance> instances) {
  if (preds.size() != instances.size()) throw UsageError("prediction/instance count mismatch");
  char buf[32];
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    out << p.id << '\t' << instances[i].labels.at(p.predicted);
    for (double x : p.probabilities) {
      std::snprintf(buf, sizeof buf, "\t%.9g", x);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing predictions");
}

// ---------------------------------------------------------------------------

void Config::load(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  load(in);
}

void Config::set(std::string key, std::string value) {
  if (key.empty()) throw UsageError("config key may not be empty");
  values_[std::move(key)] = std::move(value);
}

bool Config::has(std::string_view key) const { return values_.find(key) != values_.end(); }

std::optional<std::string> Config::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::str(std::string_view key, std::string_view fallback) const {
  auto v = get(key);
  return v ? *v : std::string(fallback);
}

std::string Config::require(std::string_view key) const {
  auto v = get(key);
  if (!v || v->empty()) throw UsageError("missing required setting '" + std::string(key) + "'");
  return *v;
}

long long Config::integer(std::string_view key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size() || v->empty()) {
    throw UsageError("setting '" + std::string(key) + "' is not an integer: " + *v);
  }
  return x;
}

double Config::real(std::string_view key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size() || v->empty()) {
    throw UsageError("setting '" + std::string(key) + "' is not a number: " + *v);
  }
  return x;
}

bool Config::flag(std::string_view key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  throw UsageError("setting '" + std::string(key) + "' is not a boolean: " + *v);
}

std::uint64_t resolve_seed(const Config& cfg) {
  if (const char* env = std::getenv("SEEKQA_SEED"); env && *env) {
    Config tmp;
    tmp.set("SEEKQA_SEED", env);
    return static_cast<std::uint64_t>(tmp.integer("SEEKQA_SEED", 0));
  }
  return static_cast<std::uint64_t>(cfg.integer("seed", 42));
}

TransEConfig transe_config(const Config& cfg) {
  TransEConfig t;
  t.dim = static_cast<std::size_t>(cfg.integer("transe.dim", 100));
  t.margin = cfg.real("transe.margin", 1.0);
  t.learning_rate = cfg.real("transe.lr", 0.01);
  t.epochs = static_cast<int>(cfg.integer("transe.epochs", 100));
  t.negatives_per_positive = static_cast<int>(cfg.integer("transe.negatives", 1));
  t.seed = resolve_seed(cfg);
  t.validate();
  return t;
}

sonar::SonarConfig sonar_config(const Config& cfg) {
  sonar::SonarConfig s;
  s.max_hop = static_cast<int>(cfg.integer("sonar.max_hop", 2));
  s.thresholds.link = cfg.real("sonar.link", 0.15);
  s.thresholds.concept_sim = cfg.real("sonar.concept", 0.30);
  s.thresholds.relation = cfg.real("sonar.relation", 0.35);
  s.disable_semantic_constraints = cfg.flag("sonar.no_sc", false);
  s.disable_filtering = cfg.flag("sonar.no_filter", false);
  s.path_cap = static_cast<std::size_t>(cfg.integer("sonar.path_cap", 100));
  s.traversal = cfg.flag("sonar.directed_only", false) ? Traversal::directed_only
                                                       : Traversal::bidirectional;
  s.validate();
  return s;
}

sketch::ModelDims model_dims(const Config& cfg, std::size_t embedding_dim) {
  sketch::ModelDims d;
  d.d_h = static_cast<std::size_t>(cfg.integer("d_h", 1024));
  d.d_g = embedding_dim;
  d.d_r = embedding_dim;
  d.d_gru = static_cast<std::size_t>(cfg.integer("model.d_gru", 150));
  d.d_a = static_cast<std::size_t>(cfg.integer("model.d_a", 100));
  d.d_k = static_cast<std::size_t>(cfg.integer("model.d_k", 100));
  d.gat_layers = static_cast<std::size_t>(cfg.integer("model.gat_layers", 2));
  return d;
}

sketch::ModelOptions model_options(const Config& cfg, sketch::ModelDims& dims) {
  sketch::ModelOptions o;
  o.no_sls = cfg.flag("model.no_sls", false);
  o.no_sus = cfg.flag("model.no_sus", false);
  o.train_relations = cfg.flag("model.train_relations", false);
  const auto ablate = cfg.str("model.ablate", "");
  std::size_t start = 0;
  while (start < ablate.size()) {
    auto comma = ablate.find(',', start);
    if (comma == std::string::npos) comma = ablate.size();
    const auto flag = ablate.substr(start, comma - start);
    if (!flag.empty()) sketch::apply_ablation(flag, dims, o);
    start = comma + 1;
  }
  dims.validate();
  return o;
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.real("train.lr", 1e-5);
  t.steps = static_cast<int>(cfg.integer("train.steps", 1200));
  t.batch_size = static_cast<std::size_t>(cfg.integer("train.batch", 24));
  t.seed = resolve_seed(cfg);
  if (t.learning_rate < 0) throw UsageError("train.lr must be non-negative");
  return t;
}

}  // namespace seekqa::harness
