// SPDX-License-Identifier: Apache-2.0
#include "seekqa/seekqa.h"

#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "seekqa/error.hpp"
#include "seekqa/harness.hpp"
#include "seekqa/kgstore.hpp"
#include "seekqa/pipeline.hpp"

struct seekqa_config {
  seekqa::harness::Config cfg;
};

struct seekqa_kg {
  seekqa::KnowledgeGraph g;
};

namespace {

thread_local std::string last_error;

seekqa_status fail(seekqa_status s, const char* what) {
  last_error = what;
  return s;
}

template <class F>
seekqa_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return SEEKQA_OK;
  } catch (const seekqa::UsageError& e) {
    return fail(SEEKQA_ERR_USAGE, e.what());
  } catch (const seekqa::DataError& e) {
    return fail(SEEKQA_ERR_DATA, e.what());
  } catch (const seekqa::IoError& e) {
    return fail(SEEKQA_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SEEKQA_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SEEKQA_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SEEKQA_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (!p) throw seekqa::UsageError(std::string(what) + " is NULL");
}

}  // namespace

extern "C" {

const char* seekqa_version(void) { return "0.1.0"; }

const char* seekqa_last_error(void) { return last_error.c_str(); }

seekqa_config* seekqa_config_new(void) { return new (std::nothrow) seekqa_config; }

void seekqa_config_free(seekqa_config* cfg) { delete cfg; }

seekqa_status seekqa_config_load_file(seekqa_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "path");
    cfg->cfg.load_file(path);
  });
}

seekqa_status seekqa_config_set(seekqa_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cfg->cfg.set(key, value);
  });
}

int64_t seekqa_config_get(const seekqa_config* cfg, const char* key, char* buf, size_t cap) {
  if (!cfg || !key) return -1;
  auto v = cfg->cfg.get(key);
  if (!v) return -1;
  if (buf && cap > 0) {
    const size_t n = v->size() < cap - 1 ? v->size() : cap - 1;
    std::memcpy(buf, v->data(), n);
    buf[n] = '\0';
  }
  return static_cast<int64_t>(v->size());
}

size_t seekqa_stage_count(void) { return seekqa::pipeline::stage_names().size(); }

const char* seekqa_stage_name(size_t index) {
  const auto& names = seekqa::pipeline::stage_names();
  return index < names.size() ? names[index].data() : nullptr;
}

seekqa_status seekqa_run_stage(const char* stage, const seekqa_config* cfg, seekqa_log_fn log,
                               void* user) {
  return guarded([&] {
    require(stage, "stage");
    require(cfg, "config");
    std::ostringstream out;
    seekqa::pipeline::run_stage(stage, cfg->cfg, out);
    if (log) {
      std::istringstream lines(out.str());
      std::string line;
      while (std::getline(lines, line)) log(line.c_str(), user);
    }
  });
}

seekqa_status seekqa_kg_load_triples(const char* path, const char* format, seekqa_kg** out) {
  return guarded([&] {
    require(path, "path");
    require(format, "format");
    require(out, "out");
    *out = nullptr;
    std::ifstream in(path);
    if (!in) throw seekqa::IoError(std::string("cannot open ") + path);
    *out = new seekqa_kg{seekqa::load_triples(in, seekqa::parse_triple_format(format))};
  });
}

seekqa_status seekqa_kg_load(const char* snapshot_path, seekqa_kg** out) {
  return guarded([&] {
    require(snapshot_path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new seekqa_kg{seekqa::pipeline::load_kg_snapshot(snapshot_path)};
  });
}

seekqa_status seekqa_kg_save(const seekqa_kg* kg, const char* snapshot_path) {
  return guarded([&] {
    require(kg, "kg");
    require(snapshot_path, "path");
    seekqa::pipeline::save_kg_snapshot(kg->g, snapshot_path);
  });
}

void seekqa_kg_free(seekqa_kg* kg) { delete kg; }

size_t seekqa_kg_concept_count(const seekqa_kg* kg) { return kg ? kg->g.concept_count() : 0; }

size_t seekqa_kg_relation_count(const seekqa_kg* kg) {
  return kg ? kg->g.base_relation_count() : 0;
}

size_t seekqa_kg_triple_count(const seekqa_kg* kg) { return kg ? kg->g.triples().size() : 0; }

int64_t seekqa_kg_find_concept(const seekqa_kg* kg, const char* name) {
  if (!kg || !name) return -1;
  auto c = kg->g.find_concept(name);
  return c ? static_cast<int64_t>(c->value) : -1;
}

seekqa_status seekqa_kg_neighbors(const seekqa_kg* kg, uint32_t concept_id, uint32_t* relations,
                                  uint32_t* concepts, size_t cap, size_t* count) {
  return guarded([&] {
    require(kg, "kg");
    require(count, "count");
    if (cap > 0) {
      require(relations, "relations");
      require(concepts, "concepts");
    }
    if (concept_id >= kg->g.concept_count()) {
      throw seekqa::UsageError("concept id " + std::to_string(concept_id) + " out of range");
    }
    const auto edges = kg->g.neighbors(seekqa::ConceptId{concept_id});
    *count = edges.size();
    for (size_t i = 0; i < edges.size() && i < cap; ++i) {
      relations[i] = edges[i].rel.value;
      concepts[i] = edges[i].node.value;
    }
  });
}

}  // extern "C"
