// SPDX-License-Identifier: Apache-2.0
#include "seekqa/kge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "seekqa/error.hpp"
#include "seekqa/rng.hpp"

namespace seekqa {

namespace {

// Upper bound on triples sampled for the per-epoch loss monitor.
constexpr std::size_t kMonitorTriples = 10000;

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void normalize_row(std::span<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0) {
    for (double& x : v) x /= n;
  }
}

// Writes (h + r - t) into diff and returns its norm.
double residual(std::span<const double> h, std::span<const double> r, std::span<const double> t,
                std::vector<double>& diff) {
  double s = 0;
  for (std::size_t k = 0; k < diff.size(); ++k) {
    diff[k] = h[k] + r[k] - t[k];
    s += diff[k] * diff[k];
  }
  return std::sqrt(s);
}

}  // namespace

void TransEConfig::validate() const {
  if (dim == 0) throw UsageError("TransE dim must be positive");
  if (!(margin > 0)) throw UsageError("TransE margin must be positive");
  if (epochs < 0) throw UsageError("TransE epochs must be non-negative");
  if (negatives_per_positive < 1) throw UsageError("TransE needs at least one negative");
  if (!(learning_rate >= 0)) throw UsageError("TransE learning rate must be non-negative");
}

double transe_distance(std::span<const double> h, std::span<const double> r,
                       std::span<const double> t) {
  if (h.size() != r.size() || h.size() != t.size()) {
    throw UsageError("transe_distance: dimension mismatch");
  }
  double s = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double d = h[k] + r[k] - t[k];
    s += d * d;
  }
  return std::sqrt(s);
}

void sync_inverse_rows(EmbeddingTable& relations) {
  const std::size_t base = relations.rows() / 2;
  for (std::size_t i = 0; i < base; ++i) {
    auto src = relations.row(i);
    auto dst = relations.row(base + i);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = -src[k];
  }
}

KgEmbeddings train_transe(const KnowledgeGraph& g, const TransEConfig& cfg) {
  cfg.validate();
  if (g.triples().empty() || g.concept_count() == 0) {
    throw DataError("cannot train TransE on an empty graph");
  }
  const std::size_t d = cfg.dim;
  const std::size_t n_concepts = g.concept_count();
  const std::size_t n_rel = g.base_relation_count();

  KgEmbeddings out;
  out.margin = cfg.margin;
  out.concepts = EmbeddingTable(n_concepts, d);
  out.relations = EmbeddingTable(2 * n_rel, d);

  Rng rng(cfg.seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < n_concepts; ++i) {
    for (double& x : out.concepts.row(i)) x = rng.uniform(-bound, bound);
  }
  for (std::size_t i = 0; i < n_rel; ++i) {
    for (double& x : out.relations.row(i)) x = rng.uniform(-bound, bound);
  }
  sync_inverse_rows(out.relations);

  const auto& triples = g.triples();

  // Loss monitor: fixed corruptions drawn once from a separate stream, so the
  // per-epoch curve tracks the model rather than negative-sampling noise.
  std::vector<std::pair<Triple, Triple>> monitor;
  {
    Rng mrng(cfg.seed ^ 0x6d6f6e69746f72ULL);
    const std::size_t stride = (triples.size() + kMonitorTriples - 1) / kMonitorTriples;
    for (std::size_t i = 0; i < triples.size(); i += stride) {
      const Triple& pos = triples[i];
      for (int n = 0; n < cfg.negatives_per_positive; ++n) {
        Triple neg = pos;
        const bool corrupt_head = mrng.below(2) == 0;
        ConceptId& slot = corrupt_head ? neg.head : neg.tail;
        if (n_concepts > 1) {
          auto c = static_cast<std::uint32_t>(mrng.below(n_concepts - 1));
          if (c >= slot.value) ++c;
          slot = ConceptId{c};
        }
        monitor.emplace_back(pos, neg);
      }
    }
  }
  auto monitor_loss = [&] {
    double sum = 0;
    for (const auto& [p, n] : monitor) {
      const auto r = out.relations.row(p.rel.value);
      const double dp = transe_distance(out.concepts.row(p.head.value), r, out.concepts.row(p.tail.value));
      const double dn = transe_distance(out.concepts.row(n.head.value), r, out.concepts.row(n.tail.value));
      sum += std::max(0.0, cfg.margin + dp - dn);
    }
    return sum / static_cast<double>(monitor.size());
  };

  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> pos_diff(d), neg_diff(d);
  const double lr = cfg.learning_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const Triple& pos = triples[idx];
      for (int n = 0; n < cfg.negatives_per_positive; ++n) {
        Triple neg = pos;
        const bool corrupt_head = rng.below(2) == 0;
        const ConceptId repl{static_cast<std::uint32_t>(rng.below(n_concepts))};
        (corrupt_head ? neg.head : neg.tail) = repl;

        auto h = out.concepts.row(pos.head.value);
        auto t = out.concepts.row(pos.tail.value);
        auto r = out.relations.row(pos.rel.value);
        auto nh = out.concepts.row(neg.head.value);
        auto nt = out.concepts.row(neg.tail.value);

        const double dp = residual(h, r, t, pos_diff);
        const double dn = residual(nh, r, nt, neg_diff);
        if (cfg.margin + dp - dn <= 0) continue;

        // d||x||/dx = x/||x||; skip a zero residual (subgradient 0).
        const double sp = dp > 0 ? 1.0 / dp : 0.0;
        const double sn = dn > 0 ? 1.0 / dn : 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double gp = pos_diff[k] * sp;
          const double gn = neg_diff[k] * sn;
          h[k] -= lr * gp;
          t[k] += lr * gp;
          r[k] -= lr * (gp - gn);
          nh[k] += lr * gn;
          nt[k] -= lr * gn;
        }
      }
    }
    for (std::size_t i = 0; i < n_concepts; ++i) normalize_row(out.concepts.row(i));
    out.epoch_loss.push_back(monitor_loss());
  }
  sync_inverse_rows(out.relations);
  return out;
}

double triple_validity(ConceptId h, RelationId r, ConceptId t, const KgEmbeddings& emb) {
  if (h.value >= emb.concepts.rows() || t.value >= emb.concepts.rows() ||
      r.value >= emb.relations.rows()) {
    throw UsageError("triple_validity: id without an embedding row");
  }
  const double dist =
      transe_distance(emb.concepts.row(h.value), emb.relations.row(r.value), emb.concepts.row(t.value));
  return sigmoid(emb.margin - dist);
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table,
                      const std::vector<std::string>& names) {
  if (names.size() != table.rows()) throw UsageError("write_embeddings: name count mismatch");
  out << table.rows() << ' ' << table.dim() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out << names[i];
    for (double x : table.row(i)) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing embeddings");
}

NamedTable read_embeddings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("embedding file is empty");
  std::istringstream header(line);
  std::size_t rows = 0, dim = 0;
  if (!(header >> rows >> dim) || dim == 0) throw DataError("bad embedding header: " + line);
  NamedTable out{{}, EmbeddingTable(rows, dim)};
  out.names.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw DataError("embedding file truncated at row " + std::to_string(i));
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    for (double& x : out.table.row(i)) {
      if (!(ls >> x) || !std::isfinite(x)) {
        throw DataError("bad value in embedding row " + std::to_string(i) + " (" + name + ")");
      }
    }
    out.names.push_back(std::move(name));
  }
  return out;
}

std::vector<std::string> relation_row_names(const KnowledgeGraph& g) {
  std::vector<std::string> names;
  const auto b = static_cast<std::uint32_t>(g.base_relation_count());
  for (std::uint32_t i = 0; i < 2 * b; ++i) names.push_back(g.relation_name(RelationId{i}));
  return names;
}

}  // namespace seekqa
