// SPDX-License-Identifier: Apache-2.0
#include "seekqa/wordvec.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "seekqa/error.hpp"
#include "seekqa/rng.hpp"
#include "seekqa/text.hpp"

namespace seekqa {

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw UsageError("cosine: dimension mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    nu += u[k] * u[k];
    nv += v[k] * v[k];
  }
  if (nu == 0 || nv == 0) return 0.0;
  const double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

WordVectors::WordVectors(std::vector<std::string> words, EmbeddingTable vectors)
    : words_(std::move(words)), vectors_(std::move(vectors)) {
  if (words_.size() != vectors_.rows()) throw UsageError("WordVectors: word/row count mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    // First occurrence wins, as in most GloVe readers.
    index_.emplace(words_[i], i);
  }
}

std::optional<std::span<const double>> WordVectors::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return vectors_.row(it->second);
}

std::vector<double> WordVectors::sentence_rep(const std::vector<std::string>& tokens) const {
  std::vector<double> acc(dim(), 0.0);
  std::size_t hits = 0;
  for (const auto& tok : tokens) {
    if (auto v = find(tok)) {
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += (*v)[k];
      ++hits;
    }
  }
  if (hits > 0) {
    for (double& x : acc) x /= static_cast<double>(hits);
  }
  return acc;
}

std::vector<double> WordVectors::concept_rep(std::string_view concept_name) const {
  return sentence_rep(text::split_concept(concept_name));
}

WordVectors WordVectors::project(std::size_t target_dim, std::uint64_t seed) const {
  if (target_dim == 0) throw UsageError("projection dim must be positive");
  const std::size_t src_dim = dim();
  std::vector<double> proj(target_dim * src_dim);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(target_dim));
  for (double& p : proj) {
    // Box-Muller
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    p = scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  EmbeddingTable out(size(), target_dim);
  for (std::size_t i = 0; i < size(); ++i) {
    auto src = vectors_.row(i);
    auto dst = out.row(i);
    for (std::size_t r = 0; r < target_dim; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < src_dim; ++c) s += proj[r * src_dim + c] * src[c];
      dst[r] = s;
    }
  }
  return WordVectors(words_, std::move(out));
}

WordVectors load_word_vectors(std::istream& in, const WordVectorLoadOptions& opts) {
  std::vector<std::string> words;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    row.clear();
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof()) throw DataError("word vectors line " + std::to_string(line_no) + ": bad number");
    if (row.empty()) throw DataError("word vectors line " + std::to_string(line_no) + ": no values");
    if (line_no == 1 && row.size() == 1 && word.find_first_not_of("0123456789") == std::string::npos &&
        row[0] >= 1 && row[0] == std::floor(row[0])) {
      dim = static_cast<std::size_t>(row[0]);  // word2vec "count dim" header
      continue;
    }
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw DataError("word vectors line " + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, got " + std::to_string(row.size()));
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError("word vectors line " + std::to_string(line_no) + ": non-finite value");
    }
    words.push_back(std::move(word));
    values.insert(values.end(), row.begin(), row.end());
  }
  if (words.empty()) throw DataError("word vector file is empty");
  EmbeddingTable table(words.size(), dim);
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(i * dim), dim, table.row(i).begin());
  }
  WordVectors wv(std::move(words), std::move(table));
  if (opts.expected_dim != 0 && dim != opts.expected_dim) {
    if (!opts.project) {
      throw DataError("word vector dim " + std::to_string(dim) + " does not match embedding dim " +
                      std::to_string(opts.expected_dim) + " (use --project)");
    }
    return wv.project(opts.expected_dim, opts.projection_seed);
  }
  return wv;
}

}  // namespace seekqa
