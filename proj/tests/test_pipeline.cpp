// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "seekqa/error.hpp"
#include "seekqa/pipeline.hpp"
#include "seekqa/text.hpp"
#include "support.hpp"

namespace seekqa::pipeline {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Writes the synthetic overfit corpus to a scratch directory.
class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("seekqa_pipeline_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const auto set = testing::overfit_set(11);

    std::ostringstream triples;
    for (const auto& t : set.graph->triples()) {
      triples << set.graph->relation_name(t.rel) << '\t' << set.graph->concept_name(t.head) << '\t'
              << set.graph->concept_name(t.tail) << '\n';
    }
    spit(path("triples.tsv"), triples.str());

    std::ostringstream data;
    for (const auto& inst : set.instances) {
      data << inst.id << '\t' << inst.question;
      for (const auto& a : inst.answers) data << '\t' << a;
      data << '\t' << inst.labels[static_cast<std::size_t>(inst.gold)] << '\n';
    }
    spit(path("data.tsv"), data.str());

    std::vector<std::string> words;
    for (const auto& inst : set.instances) {
      for (const auto& w : text::tokenize(inst.question)) words.push_back(w);
      for (const auto& a : inst.answers) words.push_back(a);
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Rng rng(1);
    std::ostringstream wv;
    write_embeddings(wv, testing::random_table(rng, words.size(), 8), words);
    spit(path("wordvec.txt"), wv.str());

    base_.set("seed", "11");
    base_.set("kg", path("kg.bin"));
    base_.set("kge", path("kge"));
    base_.set("dataset", path("data.tsv"));
    base_.set("dataset_format", "tsv");
    base_.set("wordvec", path("wordvec.txt"));
    base_.set("paths", path("paths.jsonl"));
    base_.set("transe.dim", "8");
    base_.set("transe.epochs", "200");
    base_.set("sonar.max_hop", "2");
    base_.set("d_h", "16");
    base_.set("model.d_gru", "8");
    base_.set("model.d_a", "8");
    base_.set("model.d_k", "8");
    base_.set("train.lr", "0.001");
    base_.set("train.steps", "120");
    base_.set("train.batch", "20");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string run(const std::string& stage, std::initializer_list<std::pair<const char*, std::string>> extra) {
    auto cfg = base_;
    for (const auto& [k, v] : extra) cfg.set(k, v);
    std::ostringstream log;
    run_stage(stage, cfg, log);
    return log.str();
  }

  void prepare() {
    run("build-kg", {{"triples", path("triples.tsv")}, {"out", path("kg.bin")}});
    run("train-kge", {{"out", path("kge")}});
    run("extract", {{"out", path("paths.jsonl")}});
  }

  fs::path dir_;
  harness::Config base_;
};

TEST_F(PipelineTest, StageNamesInOrder) {
  const std::vector<std::string_view> want = {"build-kg", "train-kge", "ground",  "extract", "stats",
                                              "encode-stub", "train-qa", "eval-qa", "predict"};
  EXPECT_EQ(stage_names(), want);
  std::ostringstream log;
  EXPECT_THROW(run_stage("fly", base_, log), UsageError);
}

TEST_F(PipelineTest, EndToEndIsDeterministic) {
  prepare();
  EXPECT_TRUE(fs::exists(path("kge.concepts.vec")));
  EXPECT_TRUE(fs::exists(path("kge.relations.vec")));
  EXPECT_TRUE(fs::exists(path("kge.meta")));
  EXPECT_TRUE(fs::exists(path("kge.loss.tsv")));

  const auto stats_log = run("stats", {{"out", path("stats.tsv")}});
  EXPECT_NE(stats_log.find("stats: 100 pairs"), std::string::npos) << stats_log;
  const auto stats = slurp(path("stats.tsv"));
  EXPECT_EQ(stats.substr(0, stats.find('\n')),
            "qa_pairs\tconcept_pairs\tavg_cp\ttotal_l\tavg_l1\tavg_l2\tunfiltered_total_l\t"
            "unfiltered_avg_l1\tunfiltered_avg_l2");

  run("encode-stub", {{"out", path("enc.jsonl")}});
  run("train-qa", {{"out", path("m1.bin")}, {"encoder", "file"}, {"encodings", path("enc.jsonl")}});
  run("train-qa", {{"out", path("m2.bin")}});
  // File encodings written by encode-stub and the in-process stub agree.
  EXPECT_EQ(slurp(path("m1.bin")), slurp(path("m2.bin")));
  EXPECT_EQ(slurp(path("m1.bin.loss.tsv")), slurp(path("m2.bin.loss.tsv")));

  const auto eval_log = run("eval-qa", {{"model", path("m1.bin")}, {"out", path("eval.tsv")}, {"threads", "3"}});
  const auto pos = eval_log.find("accuracy ");
  ASSERT_NE(pos, std::string::npos) << eval_log;
  const double reported = std::stod(eval_log.substr(pos + 9));

  // Recount accuracy from the predictions file.
  const auto instances = load_dataset_file(path("data.tsv"), harness::DatasetFormat::simple_tsv);
  std::istringstream preds(slurp(path("eval.tsv")));
  std::string line;
  std::size_t rows = 0, correct = 0;
  while (std::getline(preds, line)) {
    std::istringstream ls(line);
    std::string id, label;
    ls >> id >> label;
    double sum = 0, p;
    while (ls >> p) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-6) << line;
    ASSERT_LT(rows, instances.size());
    EXPECT_EQ(id, instances[rows].id);
    correct += label == instances[rows].labels[static_cast<std::size_t>(instances[rows].gold)];
    ++rows;
  }
  EXPECT_EQ(rows, instances.size());
  EXPECT_NEAR(reported, static_cast<double>(correct) / static_cast<double>(rows), 1e-6);

  run("predict", {{"model", path("m1.bin")}, {"out", path("pred.tsv")}});
  EXPECT_EQ(slurp(path("pred.tsv")), slurp(path("eval.tsv")));
}

TEST_F(PipelineTest, EvalPartsPartitionTheDataset) {
  prepare();
  run("train-qa", {{"out", path("m.bin")}, {"train.steps", "2"}, {"eval.part", "first"}});
  auto count_lines = [&](const std::string& p) {
    std::istringstream in(slurp(p));
    std::string l;
    std::size_t n = 0;
    while (std::getline(in, l)) ++n;
    return n;
  };
  run("predict", {{"model", path("m.bin")}, {"out", path("a.tsv")}, {"eval.part", "first"}});
  run("predict", {{"model", path("m.bin")}, {"out", path("b.tsv")}, {"eval.part", "second"}});
  EXPECT_EQ(count_lines(path("a.tsv")), 12u);
  EXPECT_EQ(count_lines(path("b.tsv")), 8u);
  EXPECT_THROW(run("predict", {{"model", path("m.bin")}, {"out", path("c.tsv")}, {"eval.part", "middle"}}),
               UsageError);
}

TEST_F(PipelineTest, GroundWritesOneRecordPerCandidate) {
  run("build-kg", {{"triples", path("triples.tsv")}, {"out", path("kg.bin")}});
  run("ground", {{"out", path("g.jsonl")}});
  std::istringstream in(slurp(path("g.jsonl")));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("q_concepts"));
    EXPECT_TRUE(j.contains("a_concepts"));
    ++n;
  }
  EXPECT_EQ(n, 100u);
}

TEST_F(PipelineTest, KgeFilesRoundTrip) {
  run("build-kg", {{"triples", path("triples.tsv")}, {"out", path("kg.bin")}});
  const auto g = load_kg_snapshot(path("kg.bin"));
  TransEConfig tc;
  tc.dim = 4;
  tc.epochs = 5;
  tc.margin = 0.75;
  const auto emb = train_transe(g, tc);
  save_kge(path("e"), g, emb);
  const auto back = load_kge(path("e"), g);
  EXPECT_EQ(back.concepts, emb.concepts);
  EXPECT_EQ(back.relations, emb.relations);
  EXPECT_EQ(back.margin, 0.75);
  const auto base = base_relation_rows(emb, g.base_relation_count());
  EXPECT_EQ(base.rows(), g.base_relation_count());
}

TEST_F(PipelineTest, MissingInputsAreReported) {
  EXPECT_THROW(run("build-kg", {{"triples", path("nope.tsv")}, {"out", path("kg.bin")}}), IoError);
  EXPECT_THROW(run("build-kg", {{"triples", path("triples.tsv")}}), UsageError);
  spit(path("bad.tsv"), "only\ttwo\n");
  EXPECT_THROW(run("build-kg", {{"triples", path("bad.tsv")}, {"out", path("kg.bin")}}), DataError);
  EXPECT_THROW(run("train-kge", {{"kg", path("absent.bin")}, {"out", path("kge")}}), IoError);
}

TEST_F(PipelineTest, ExtractionFileRoundTrip) {
  prepare();
  const auto g = load_kg_snapshot(path("kg.bin"));
  std::ifstream in(path("paths.jsonl"));
  const auto records = read_extractions(in, g);
  EXPECT_EQ(records.size(), 100u);
  std::ostringstream out;
  write_extractions(out, records, g);
  EXPECT_EQ(out.str(), slurp(path("paths.jsonl")));
}

}  // namespace
}  // namespace seekqa::pipeline
