// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Every subcommand takes --config <file> plus flags
// that override individual keys.

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seekqa/seekqa.h"

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

// Flags that map one-to-one onto config keys.
const Flag kValueFlags[] = {
    {"--out", "out", "output file or prefix"},
    {"--kg", "kg", "knowledge graph snapshot"},
    {"--kge", "kge", "embedding prefix from train-kge"},
    {"--triples", "triples", "triple file for build-kg"},
    {"--triple-format", "triple_format", "tsv3 | conceptnet_csv"},
    {"--wordvec", "wordvec", "word vector text file"},
    {"--dataset", "dataset", "question file"},
    {"--dataset-format", "dataset_format", "jsonl | tsv"},
    {"--paths", "paths", "extraction JSONL from extract"},
    {"--encoder", "encoder", "stub | file"},
    {"--encodings", "encodings", "encoding JSONL when --encoder file"},
    {"--d-h", "d_h", "contextual encoder width"},
    {"--model", "model", "SKETCH checkpoint"},
    {"--seed", "seed", "random seed (SEEKQA_SEED overrides)"},
    {"--threads", "threads", "worker threads"},
    {"--max-hop", "sonar.max_hop", "path length limit (1-3)"},
    {"--ablate", "model.ablate", "comma list: gat_layers=N, no_sls, no_sus"},
    {"--steps", "train.steps", "training steps"},
    {"--lr", "train.lr", "learning rate"},
    {"--batch", "train.batch", "batch size"},
    {"--eval-part", "eval.part", "all | first | second"},
    {"--eval-split", "eval.split", "fraction in the first part"},
    {"--loss", "loss", "per-step loss TSV for train-qa"},
};

const std::map<std::string, std::string> kStageHelp = {
    {"build-kg", "parse a triple file into a graph snapshot"},
    {"train-kge", "train TransE concept and relation embeddings"},
    {"ground", "match question and answer text to concepts"},
    {"extract", "enumerate, score and filter knowledge paths"},
    {"stats", "summarize path counts from an extraction file"},
    {"encode-stub", "write deterministic stand-in contextual encodings"},
    {"train-qa", "train the answer scorer"},
    {"eval-qa", "score a labeled question set and report accuracy"},
    {"predict", "score questions and write per-choice probabilities"},
};

const Flag kBoolFlags[] = {
    {"--project", "project", "project word vectors to the embedding dim"},
    {"--directed-only", "sonar.directed_only", "follow edges in stored direction only"},
    {"--no-sc", "sonar.no_sc", "drop the semantic constraints"},
    {"--no-filter", "sonar.no_filter", "keep every extracted path"},
    {"--train-relations", "model.train_relations", "fine-tune relation vectors"},
    {"--drop-knowledge", "drop_knowledge", "text-only inputs"},
};

int exit_code(seekqa_status s) {
  switch (s) {
    case SEEKQA_OK:
      return 0;
    case SEEKQA_ERR_USAGE:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SEEK-QA knowledge path extraction and answer scoring"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;

  for (size_t i = 0; i < seekqa_stage_count(); ++i) {
    const std::string name = seekqa_stage_name(i);
    const auto help = kStageHelp.find(name);
    auto* sub = app.add_subcommand(name, help == kStageHelp.end() ? std::string() : help->second);
    sub->add_option("--config", config_path, "key=value settings file");
    sub->add_option("--set", sets, "extra key=value setting (repeatable)");
    for (const auto& f : kValueFlags) sub->add_option(f.name, values[f.key], f.help);
    for (const auto& f : kBoolFlags) sub->add_flag(f.name, switches[f.key], f.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  std::unique_ptr<seekqa_config, decltype(&seekqa_config_free)> cfg(seekqa_config_new(),
                                                                    &seekqa_config_free);
  auto check = [](seekqa_status s) {
    if (s != SEEKQA_OK) {
      std::fprintf(stderr, "error: %s\n", seekqa_last_error());
      std::exit(exit_code(s));
    }
  };
  if (!config_path.empty()) check(seekqa_config_load_file(cfg.get(), config_path.c_str()));
  for (const auto& f : kValueFlags) {
    const auto& v = values[f.key];
    if (!v.empty()) check(seekqa_config_set(cfg.get(), f.key, v.c_str()));
  }
  for (const auto& f : kBoolFlags) {
    if (switches[f.key]) check(seekqa_config_set(cfg.get(), f.key, "1"));
  }
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", s.c_str());
      return 1;
    }
    check(seekqa_config_set(cfg.get(), s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()));
  }

  const auto stage = app.get_subcommands().front()->get_name();
  const auto status = seekqa_run_stage(
      stage.c_str(), cfg.get(), [](const char* line, void*) { std::printf("%s\n", line); }, nullptr);
  if (status != SEEKQA_OK) {
    std::fprintf(stderr, "error: %s\n", seekqa_last_error());
    return exit_code(status);
  }
  return 0;
}
