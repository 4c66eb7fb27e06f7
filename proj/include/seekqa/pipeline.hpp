// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seekqa/harness.hpp"
#include "seekqa/kge.hpp"
#include "seekqa/kgstore.hpp"
#include "seekqa/sonar.hpp"
#include "seekqa/wordvec.hpp"

namespace seekqa::pipeline {

/// Stage names in pipeline order.
const std::vector<std::string_view>& stage_names();

/// Runs one stage configured by `cfg`; a one-line summary goes to `log`.
/// Throws UsageError for unknown stages or missing settings.
void run_stage(std::string_view stage, const harness::Config& cfg, std::ostream& log);

// Stage I/O helpers, shared by the stages and tests.

KnowledgeGraph load_kg_snapshot(const std::string& path);
void save_kg_snapshot(const KnowledgeGraph& g, const std::string& path);

/// Writes `<prefix>.concepts.vec`, `<prefix>.relations.vec` and `<prefix>.meta`.
void save_kge(const std::string& prefix, const KnowledgeGraph& g, const KgEmbeddings& emb);
/// Reads the three files and reorders rows to the graph's vocabulary.
KgEmbeddings load_kge(const std::string& prefix, const KnowledgeGraph& g);

std::vector<harness::QAInstance> load_dataset_file(const std::string& path,
                                                   harness::DatasetFormat format);

void write_extractions(std::ostream& out, std::span<const sonar::GroundedCandidate> records,
                       const KnowledgeGraph& g);
std::vector<sonar::GroundedCandidate> read_extractions(std::istream& in, const KnowledgeGraph& g);

/// `stats` output: one header row then one value row.
void write_stats(std::ostream& out, const sonar::PathStats& stats);

/// Base relation rows only (the first half of the relation table).
EmbeddingTable base_relation_rows(const KgEmbeddings& emb, std::size_t base_count);

}  // namespace seekqa::pipeline
