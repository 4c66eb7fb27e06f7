// SPDX-License-Identifier: Apache-2.0
#include "seekqa/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <unordered_map>

#include "json.hpp"
#include "seekqa/encoder.hpp"
#include "seekqa/error.hpp"
#include "seekqa/sketch.hpp"
#include "seekqa/text.hpp"

namespace seekqa::pipeline {

namespace {

using harness::Config;

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::size_t threads_of(const Config& cfg) {
  const auto t = cfg.integer("threads", 1);
  if (t < 1) throw UsageError("threads must be at least 1");
  return static_cast<std::size_t>(t);
}

std::vector<harness::QAInstance> dataset_of(const Config& cfg) {
  return load_dataset_file(cfg.require("dataset"),
                           harness::parse_dataset_format(cfg.str("dataset_format", "jsonl")));
}

/// Applies eval.split (fraction of the first part) and eval.part (all | first | second).
std::vector<harness::QAInstance> select_part(std::vector<harness::QAInstance> instances,
                                             const Config& cfg) {
  const auto part = cfg.str("eval.part", "all");
  if (part == "all") return instances;
  if (part != "first" && part != "second") {
    throw UsageError("eval.part must be all, first or second");
  }
  auto [first, second] =
      harness::split_dev(std::move(instances), cfg.real("eval.split", 0.6), harness::resolve_seed(cfg));
  return part == "first" ? std::move(first) : std::move(second);
}

std::map<std::string, sonar::GroundedCandidate> extraction_map(const Config& cfg,
                                                               const KnowledgeGraph& g) {
  auto in = open_in(cfg.require("paths"));
  std::map<std::string, sonar::GroundedCandidate> out;
  for (auto& rec : read_extractions(in, g)) {
    const auto id = rec.id;
    if (!out.emplace(id, std::move(rec)).second) throw DataError("duplicate extraction record " + id);
  }
  return out;
}

harness::EncodingSource encodings_of(const Config& cfg) {
  const auto mode = cfg.str("encoder", "stub");
  const auto d_h = static_cast<std::size_t>(cfg.integer("d_h", 1024));
  if (mode == "stub") return harness::stub_encodings(harness::resolve_seed(cfg), d_h);
  if (mode == "file") {
    auto in = open_in(cfg.require("encodings"));
    return harness::file_encodings(encoder::load_encodings(in, d_h));
  }
  throw UsageError("encoder must be stub or file");
}

struct QaContext {
  KnowledgeGraph g;
  std::shared_ptr<const EmbeddingTable> concepts;
  std::shared_ptr<const EmbeddingTable> relations;
};

QaContext qa_context(const Config& cfg) {
  auto g = load_kg_snapshot(cfg.require("kg"));
  auto emb = load_kge(cfg.require("kge"), g);
  auto rel = base_relation_rows(emb, g.base_relation_count());
  return {std::move(g), std::make_shared<const EmbeddingTable>(std::move(emb.concepts)),
          std::make_shared<const EmbeddingTable>(std::move(rel))};
}

harness::InputOptions input_options(const Config& cfg) {
  return {cfg.flag("drop_knowledge", false)};
}

void stage_build_kg(const Config& cfg, std::ostream& log) {
  auto in = open_in(cfg.require("triples"));
  auto g = load_triples(in, parse_triple_format(cfg.str("triple_format", "tsv3")));
  const auto out = cfg.require("out");
  save_kg_snapshot(g, out);
  log << "build-kg: " << g.triples().size() << " triples, " << g.concept_count() << " concepts, "
      << g.base_relation_count() << " relations -> " << out << '\n';
}

void stage_train_kge(const Config& cfg, std::ostream& log) {
  auto g = load_kg_snapshot(cfg.require("kg"));
  const auto tc = harness::transe_config(cfg);
  auto emb = train_transe(g, tc);
  const auto prefix = cfg.require("out");
  save_kge(prefix, g, emb);
  auto loss = open_out(prefix + ".loss.tsv");
  loss << "epoch\tloss\n";
  for (std::size_t e = 0; e < emb.epoch_loss.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", e + 1, emb.epoch_loss[e]);
    loss << buf;
  }
  finish(loss, prefix + ".loss.tsv");
  log << "train-kge: dim " << tc.dim << ", " << tc.epochs << " epochs, final loss "
      << (emb.epoch_loss.empty() ? std::string("n/a") : fmt(emb.epoch_loss.back())) << " -> "
      << prefix << ".*\n";
}

void stage_ground(const Config& cfg, std::ostream& log) {
  auto g = load_kg_snapshot(cfg.require("kg"));
  const auto instances = dataset_of(cfg);
  const auto path = cfg.require("out");
  auto out = open_out(path);
  auto concepts = [&](std::string_view text) {
    auto arr = nlohmann::json::array();
    for (const auto& c : sonar::ground_concepts(text, g)) {
      arr.push_back({{"concept", g.concept_name(c.id)}, {"span", {c.begin, c.end}}});
    }
    return arr;
  };
  for (const auto& inst : instances) {
    const auto q = concepts(inst.question);
    for (std::size_t c = 0; c < inst.answers.size(); ++c) {
      out << nlohmann::json{{"id", harness::candidate_key(inst, c)},
                            {"q_concepts", q},
                            {"a_concepts", concepts(inst.answers[c])}}
                 .dump()
          << '\n';
    }
  }
  finish(out, path);
  log << "ground: " << instances.size() * harness::kCandidateCount << " pairs -> " << path << '\n';
}

void stage_extract(const Config& cfg, std::ostream& log) {
  auto g = load_kg_snapshot(cfg.require("kg"));
  const auto emb = load_kge(cfg.require("kge"), g);
  WordVectorLoadOptions wopts;
  wopts.expected_dim = emb.relations.dim();
  wopts.project = cfg.flag("project", false);
  auto win = open_in(cfg.require("wordvec"));
  const auto wv = load_word_vectors(win, wopts);
  const auto sc = harness::sonar_config(cfg);
  const auto instances = dataset_of(cfg);
  const auto records = harness::extract_dataset(instances, g, emb, wv, sc, threads_of(cfg));
  const auto path = cfg.require("out");
  auto out = open_out(path);
  write_extractions(out, records, g);
  finish(out, path);
  const auto st = sonar::path_stats(records);
  log << "extract: " << records.size() << " pairs, " << st.filtered.total_links << " of "
      << st.unfiltered.total_links << " paths kept -> " << path << '\n';
}

void stage_stats(const Config& cfg, std::ostream& log) {
  auto g = load_kg_snapshot(cfg.require("kg"));
  auto in = open_in(cfg.require("paths"));
  const auto records = read_extractions(in, g);
  const auto st = sonar::path_stats(records);
  const auto path = cfg.require("out");
  auto out = open_out(path);
  write_stats(out, st);
  finish(out, path);
  log << "stats: " << st.qa_pairs << " pairs, avg CP " << fmt(st.filtered.avg_pairs_per_qa)
      << ", total L " << st.filtered.total_links << " (unfiltered " << st.unfiltered.total_links
      << ") -> " << path << '\n';
}

void stage_encode_stub(const Config& cfg, std::ostream& log) {
  const auto instances = dataset_of(cfg);
  const auto d_h = static_cast<std::size_t>(cfg.integer("d_h", 1024));
  const auto seed = harness::resolve_seed(cfg);
  const auto path = cfg.require("out");
  auto out = open_out(path);
  for (const auto& inst : instances) {
    for (std::size_t c = 0; c < inst.answers.size(); ++c) {
      encoder::write_encoding(
          out, encoder::stub_encode(harness::candidate_key(inst, c), inst.question, inst.answers[c],
                                    seed, d_h));
    }
  }
  finish(out, path);
  log << "encode-stub: " << instances.size() * harness::kCandidateCount << " records, d_h " << d_h
      << " -> " << path << '\n';
}

void stage_train_qa(const Config& cfg, std::ostream& log) {
  auto ctx = qa_context(cfg);
  const auto instances = select_part(dataset_of(cfg), cfg);
  const auto inputs = harness::build_inputs(instances, extraction_map(cfg, ctx.g), encodings_of(cfg),
                                            ctx.g, input_options(cfg));
  auto dims = harness::model_dims(cfg, ctx.concepts->dim());
  const auto opts = harness::model_options(cfg, dims);
  const auto tc = harness::train_config(cfg);
  sketch::SketchModel model(dims, opts, ctx.concepts, ctx.relations, tc.seed);
  const auto path = cfg.require("out");
  const auto loss_path = cfg.str("loss", path + ".loss.tsv");
  auto loss = open_out(loss_path);
  const auto tl = harness::train(model, inputs, tc, &loss);
  finish(loss, loss_path);
  auto out = open_out(path, true);
  model.save(out);
  finish(out, path);
  log << "train-qa: " << tc.steps << " steps on " << inputs.size() << " instances, final loss "
      << (tl.loss.empty() ? std::string("n/a") : fmt(tl.loss.back())) << " -> " << path << '\n';
}

void run_model(const Config& cfg, std::ostream& log, bool with_gold) {
  auto ctx = qa_context(cfg);
  const auto instances = select_part(dataset_of(cfg), cfg);
  const auto inputs = harness::build_inputs(instances, extraction_map(cfg, ctx.g), encodings_of(cfg),
                                            ctx.g, input_options(cfg));
  auto min = open_in(cfg.require("model"), true);
  auto model = sketch::SketchModel::load(min, ctx.concepts, ctx.relations);
  const auto path = cfg.require("out");
  auto out = open_out(path);
  if (with_gold) {
    const auto ev = harness::evaluate(model, inputs, threads_of(cfg));
    harness::write_predictions(out, ev.predictions, instances);
    finish(out, path);
    log << "eval-qa: accuracy " << fmt(ev.accuracy) << " on " << inputs.size() << " instances -> "
        << path << '\n';
  } else {
    const auto preds = harness::predict_all(model, inputs, threads_of(cfg));
    harness::write_predictions(out, preds, instances);
    finish(out, path);
    log << "predict: " << preds.size() << " instances -> " << path << '\n';
  }
}

void stage_eval_qa(const Config& cfg, std::ostream& log) { run_model(cfg, log, true); }
void stage_predict(const Config& cfg, std::ostream& log) { run_model(cfg, log, false); }

using StageFn = void (*)(const Config&, std::ostream&);

const std::vector<std::pair<std::string_view, StageFn>>& stages() {
  static const std::vector<std::pair<std::string_view, StageFn>> table = {
      {"build-kg", stage_build_kg},       {"train-kge", stage_train_kge},
      {"ground", stage_ground},           {"extract", stage_extract},
      {"stats", stage_stats},             {"encode-stub", stage_encode_stub},
      {"train-qa", stage_train_qa},       {"eval-qa", stage_eval_qa},
      {"predict", stage_predict},
  };
  return table;
}

}  // namespace

const std::vector<std::string_view>& stage_names() {
  static const std::vector<std::string_view> names = [] {
    std::vector<std::string_view> n;
    for (const auto& [name, fn] : stages()) n.push_back(name);
    return n;
  }();
  return names;
}

void run_stage(std::string_view stage, const harness::Config& cfg, std::ostream& log) {
  for (const auto& [name, fn] : stages()) {
    if (name == stage) {
      fn(cfg, log);
      return;
    }
  }
  throw UsageError("unknown stage: " + std::string(stage));
}

KnowledgeGraph load_kg_snapshot(const std::string& path) {
  auto in = open_in(path, true);
  return KnowledgeGraph::load(in);
}

void save_kg_snapshot(const KnowledgeGraph& g, const std::string& path) {
  auto out = open_out(path, true);
  g.save(out);
  finish(out, path);
}

void save_kge(const std::string& prefix, const KnowledgeGraph& g, const KgEmbeddings& emb) {
  {
    auto out = open_out(prefix + ".concepts.vec");
    write_embeddings(out, emb.concepts, g.concepts().names());
    finish(out, prefix + ".concepts.vec");
  }
  {
    auto out = open_out(prefix + ".relations.vec");
    write_embeddings(out, emb.relations, relation_row_names(g));
    finish(out, prefix + ".relations.vec");
  }
  auto out = open_out(prefix + ".meta");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", emb.margin);
  out << "dim=" << emb.concepts.dim() << "\nmargin=" << buf << '\n';
  finish(out, prefix + ".meta");
}

KgEmbeddings load_kge(const std::string& prefix, const KnowledgeGraph& g) {
  auto reorder = [](NamedTable nt, const std::vector<std::string>& order, const std::string& what) {
    if (nt.names.size() != order.size()) {
      throw DataError(what + ": " + std::to_string(nt.names.size()) + " rows, graph needs " +
                      std::to_string(order.size()));
    }
    std::unordered_map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < nt.names.size(); ++i) {
      if (!at.emplace(nt.names[i], i).second) throw DataError(what + ": duplicate row " + nt.names[i]);
    }
    EmbeddingTable t(order.size(), nt.table.dim());
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto it = at.find(order[i]);
      if (it == at.end()) throw DataError(what + ": no row for " + order[i]);
      std::copy_n(nt.table.row(it->second).begin(), t.dim(), t.row(i).begin());
    }
    return t;
  };
  KgEmbeddings emb;
  {
    auto in = open_in(prefix + ".concepts.vec");
    emb.concepts = reorder(read_embeddings(in), g.concepts().names(), prefix + ".concepts.vec");
  }
  {
    auto in = open_in(prefix + ".relations.vec");
    emb.relations = reorder(read_embeddings(in), relation_row_names(g), prefix + ".relations.vec");
  }
  if (emb.concepts.dim() != emb.relations.dim()) {
    throw DataError("concept and relation embedding dims differ");
  }
  Config meta;
  meta.load_file(prefix + ".meta");
  emb.margin = meta.real("margin", 1.0);
  if (static_cast<std::size_t>(meta.integer("dim", 0)) != emb.concepts.dim()) {
    throw DataError(prefix + ".meta: dim does not match the vector files");
  }
  return emb;
}

std::vector<harness::QAInstance> load_dataset_file(const std::string& path,
                                                   harness::DatasetFormat format) {
  auto in = open_in(path);
  return harness::load_dataset(in, format);
}

void write_extractions(std::ostream& out, std::span<const sonar::GroundedCandidate> records,
                       const KnowledgeGraph& g) {
  for (const auto& r : records) out << sonar::to_json(r, g).dump() << '\n';
  if (!out) throw IoError("failed writing extraction records");
}

std::vector<sonar::GroundedCandidate> read_extractions(std::istream& in, const KnowledgeGraph& g) {
  std::vector<sonar::GroundedCandidate> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("extraction line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(sonar::candidate_from_json(j, g));
  }
  return out;
}

void write_stats(std::ostream& out, const sonar::PathStats& st) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "qa_pairs\tconcept_pairs\tavg_cp\ttotal_l\tavg_l1\tavg_l2\t"
                "unfiltered_total_l\tunfiltered_avg_l1\tunfiltered_avg_l2\n"
                "%zu\t%zu\t%.6f\t%zu\t%.6f\t%.6f\t%zu\t%.6f\t%.6f\n",
                st.qa_pairs, st.concept_pairs, st.filtered.avg_pairs_per_qa,
                st.filtered.total_links, st.filtered.avg_links_per_qa,
                st.filtered.avg_links_per_pair, st.unfiltered.total_links,
                st.unfiltered.avg_links_per_qa, st.unfiltered.avg_links_per_pair);
  out << buf;
  if (!out) throw IoError("failed writing stats");
}

EmbeddingTable base_relation_rows(const KgEmbeddings& emb, std::size_t base_count) {
  if (emb.relations.rows() < base_count) throw DataError("relation table has too few rows");
  EmbeddingTable t(base_count, emb.relations.dim());
  for (std::size_t i = 0; i < base_count; ++i) {
    std::copy_n(emb.relations.row(i).begin(), t.dim(), t.row(i).begin());
  }
  return t;
}

}  // namespace seekqa::pipeline
