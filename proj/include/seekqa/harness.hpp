// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seekqa/encoder.hpp"
#include "seekqa/kgstore.hpp"
#include "seekqa/sketch.hpp"
#include "seekqa/sonar.hpp"

namespace seekqa::harness {

inline constexpr std::size_t kCandidateCount = 5;

struct QAInstance {
  std::string id;
  std::string question;
  std::vector<std::string> labels;   // "A".."E"
  std::vector<std::string> answers;  // same length as labels
  int gold = -1;                     // index into answers, -1 when unknown

  bool operator==(const QAInstance&) const = default;
};

enum class DatasetFormat { commonsenseqa_jsonl, simple_tsv };

DatasetFormat parse_dataset_format(std::string_view name);

/// CommonsenseQA JSONL (question.stem, question.choices[].label/text,
/// answerKey) or TSV `id stem a1 .. a5 [key]` where key is a label A-E.
std::vector<QAInstance> load_dataset(std::istream& in, DatasetFormat format);

/// Seeded shuffle, then the first round(n * first_fraction) instances go to
/// the first part.
std::pair<std::vector<QAInstance>, std::vector<QAInstance>> split_dev(
    std::vector<QAInstance> instances, double first_fraction, std::uint64_t seed);

/// "<instance id>/<candidate index>", the key used in extraction and encoding files.
std::string candidate_key(const QAInstance& inst, std::size_t candidate);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions are
/// rethrown on the caller's thread (first one wins).
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Extraction for every question-candidate pair, in dataset order.
std::vector<sonar::GroundedCandidate> extract_dataset(std::span<const QAInstance> instances,
                                                      const KnowledgeGraph& g,
                                                      const KgEmbeddings& emb,
                                                      const WordVectors& wv,
                                                      const sonar::SonarConfig& cfg,
                                                      std::size_t threads = 1);

struct InputOptions {
  /// Build knowledge-free inputs (empty subgraph) regardless of extraction.
  bool drop_knowledge = false;
};

/// Converts one extraction record plus its contextual encoding into model
/// input. Concept table rows are concept ids; relation rows are base ids.
sketch::CandidateInput build_candidate_input(const sonar::GroundedCandidate& grounded,
                                             const encoder::ContextualEncoding& enc,
                                             const QAInstance& inst, std::size_t candidate,
                                             const KnowledgeGraph& g, const InputOptions& opts = {});

/// Supplies the encoding for a candidate key.
using EncodingSource =
    std::function<encoder::ContextualEncoding(const QAInstance&, std::size_t candidate)>;

EncodingSource stub_encodings(std::uint64_t seed, std::size_t d_h);
EncodingSource file_encodings(std::map<std::string, encoder::ContextualEncoding> encodings);

/// `grounded` holds one record per candidate keyed by candidate_key.
std::vector<sketch::InstanceInput> build_inputs(
    std::span<const QAInstance> instances,
    const std::map<std::string, sonar::GroundedCandidate>& grounded, const EncodingSource& encodings,
    const KnowledgeGraph& g, const InputOptions& opts = {});

// ---------------------------------------------------------------------------
// Training and evaluation

struct TrainConfig {
  double learning_rate = 1e-5;
  int steps = 1200;
  std::size_t batch_size = 24;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 42;
};

/// Adam with bias correction over every model parameter.
class Adam {
 public:
  Adam(sketch::ModelParams& params, const TrainConfig& cfg);
  void step();

 private:
  sketch::ModelParams& params_;
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

struct TrainLog {
  std::vector<double> loss;            // per step
  std::vector<double> batch_accuracy;  // per step, before the update
};

/// Adam over reshuffled mini-batches. Writes `step<TAB>loss<TAB>batch_acc`
/// lines to `loss_tsv` when given.
TrainLog train(sketch::SketchModel& model, std::span<const sketch::InstanceInput> train_set,
               const TrainConfig& cfg, std::ostream* loss_tsv = nullptr);

struct InstancePrediction {
  std::string id;
  std::size_t predicted = 0;
  std::vector<double> probabilities;
};

struct Evaluation {
  double accuracy = 0;
  std::vector<InstancePrediction> predictions;
};

/// Instances fan out over `threads` workers; output keeps input order.
std::vector<InstancePrediction> predict_all(sketch::SketchModel& model,
                                            std::span<const sketch::InstanceInput> instances,
                                            std::size_t threads = 1);

/// Accuracy against gold labels; every instance must have one.
Evaluation evaluate(sketch::SketchModel& model, std::span<const sketch::InstanceInput> instances,
                    std::size_t threads = 1);

/// TSV `id<TAB>predicted_label<TAB>p0..p4`.
void write_predictions(std::ostream& out, std::span<const InstancePrediction> preds,
                       std::span<const QAInstance> instances);

// ---------------------------------------------------------------------------
// Configuration

/// Flat key=value settings. '#' starts a comment line.
class Config {
 public:
  void load(std::istream& in);
  void load_file(const std::string& path);
  void set(std::string key, std::string value);
  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;

  std::string str(std::string_view key, std::string_view fallback) const;
  std::string require(std::string_view key) const;
  long long integer(std::string_view key, long long fallback) const;
  double real(std::string_view key, double fallback) const;
  bool flag(std::string_view key, bool fallback) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

/// Seed from config key "seed", overridden by SEEKQA_SEED when set.
std::uint64_t resolve_seed(const Config& cfg);

TransEConfig transe_config(const Config& cfg);
sonar::SonarConfig sonar_config(const Config& cfg);
/// d_g and d_r come from the embedding dim; d_h from config (default 1024).
sketch::ModelDims model_dims(const Config& cfg, std::size_t embedding_dim);
sketch::ModelOptions model_options(const Config& cfg, sketch::ModelDims& dims);
TrainConfig train_config(const Config& cfg);

}  // namespace seekqa::harness
