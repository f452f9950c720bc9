#ifndef MULVULN_POOL_HPP
#define MULVULN_POOL_HPP

// Language-specific parameter pool: S prompt matrices P_j in R^{L_p x D},
// each paired with a learnable key k_j in R^D. An input's query vector picks
// matrices by cosine similarity against the keys, either over the whole pool
// or restricted to the indices assigned to its language; the chosen matrices
// are prepended to the token embeddings.

#include <algorithm>
#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mulvuln/corpus.hpp"
#include "mulvuln/errors.hpp"
#include "mulvuln/params.hpp"
#include "mulvuln/tensor.hpp"

namespace mulvuln {

struct ParameterPool {
  std::size_t prompt_length = 5;  // L_p
  std::size_t d_model = 0;        // D
  std::vector<Tensor> matrices;   // S x [L_p, D]

  std::size_t size() const { return matrices.size(); }

  static ParameterPool init_random(std::size_t pool_size, std::size_t prompt_length, std::size_t d_model,
                                   std::mt19937_64& rng, double stddev = 0.02) {
    if (pool_size < 1) throw ConfigError("pool: size must be >= 1");
    if (prompt_length < 1) throw ConfigError("pool: prompt length must be >= 1");
    ParameterPool p;
    p.prompt_length = prompt_length;
    p.d_model = d_model;
    for (std::size_t i = 0; i < pool_size; ++i) p.matrices.push_back(normal_init({prompt_length, d_model}, stddev, rng));
    return p;
  }

  void collect(ParamList& out) const {
    for (std::size_t i = 0; i < matrices.size(); ++i) out.push_back({"pool.P." + std::to_string(i), matrices[i]});
  }
};

struct KeySet {
  std::vector<Tensor> keys;  // S x [D]

  std::size_t size() const { return keys.size(); }

  static KeySet init_random(std::size_t pool_size, std::size_t d_model, std::mt19937_64& rng,
                            double stddev = 0.02) {
    KeySet k;
    for (std::size_t i = 0; i < pool_size; ++i) k.keys.push_back(normal_init({d_model}, stddev, rng));
    return k;
  }

  // Redraws any key whose norm has collapsed to (numerically) zero. Returns
  // the number of keys replaced.
  std::size_t reinit_degenerate(std::mt19937_64& rng, double stddev = 0.02, double min_norm = 1e-12) {
    std::size_t n = 0;
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& k : keys) {
      if (vector_norm(k.data()) > min_norm) continue;
      for (double& v : k.mutable_data()) v = dist(rng);
      ++n;
    }
    return n;
  }

  void collect(ParamList& out) const {
    for (std::size_t i = 0; i < keys.size(); ++i) out.push_back({"pool.k." + std::to_string(i), keys[i]});
  }
};

// Per-language candidate index lists. Languages own contiguous blocks of
// `per_language` indices in canonical language order.
struct LanguageAssignment {
  std::array<std::vector<std::size_t>, kNumLanguages> indices{};

  static LanguageAssignment contiguous(std::size_t per_language = 1) {
    if (per_language < 1) throw ConfigError("language assignment: matrices per language must be >= 1");
    LanguageAssignment a;
    for (std::size_t l = 0; l < kNumLanguages; ++l)
      for (std::size_t j = 0; j < per_language; ++j) a.indices[l].push_back(l * per_language + j);
    return a;
  }

  const std::vector<std::size_t>& allowed(Language l) const { return indices[language_index(l)]; }

  // Every language mapped, indices in range, lists pairwise disjoint.
  void validate(std::size_t pool_size) const {
    std::vector<int> owner(pool_size, -1);
    for (std::size_t l = 0; l < kNumLanguages; ++l) {
      if (indices[l].empty())
        throw ConfigError("language assignment: no index for " + std::string(language_tag(kAllLanguages[l])));
      for (std::size_t idx : indices[l]) {
        if (idx >= pool_size)
          throw ConfigError("language assignment: index " + std::to_string(idx) + " >= pool size " +
                            std::to_string(pool_size));
        if (owner[idx] != -1 && owner[idx] != static_cast<int>(l))
          throw ConfigError("language assignment: index " + std::to_string(idx) + " shared by two languages");
        owner[idx] = static_cast<int>(l);
      }
    }
  }

  // "C:0;CPP:1,2;..." form used in run configs.
  std::string to_string() const {
    std::string out;
    for (std::size_t l = 0; l < kNumLanguages; ++l) {
      if (l) out += ';';
      out += std::string(language_tag(kAllLanguages[l])) + ':';
      for (std::size_t j = 0; j < indices[l].size(); ++j) out += (j ? "," : "") + std::to_string(indices[l][j]);
    }
    return out;
  }

  static LanguageAssignment parse(const std::string& text) {
    LanguageAssignment a;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find(';', pos);
      if (end == std::string::npos) end = text.size();
      const std::string item = text.substr(pos, end - pos);
      const std::size_t colon = item.find(':');
      if (colon == std::string::npos) throw ConfigError("language assignment: bad entry '" + item + "'");
      const auto lang = try_parse_language(item.substr(0, colon));
      if (!lang) throw ConfigError("language assignment: unknown language '" + item.substr(0, colon) + "'");
      auto& list = a.indices[language_index(*lang)];
      std::size_t p = colon + 1;
      while (p < item.size()) {
        std::size_t comma = item.find(',', p);
        if (comma == std::string::npos) comma = item.size();
        try {
          list.push_back(std::stoul(item.substr(p, comma - p)));
        } catch (const std::exception&) {
          throw ConfigError("language assignment: bad index in '" + item + "'");
        }
        p = comma + 1;
      }
      pos = end + 1;
    }
    return a;
  }

  bool operator==(const LanguageAssignment&) const = default;
};

struct Selection {
  std::vector<std::size_t> indices;  // best first
  std::vector<double> scores;        // phi(q, k_i), non-increasing

  std::size_t i_star() const { return indices.front(); }
};

// q(X): the [CLS] row of the embedded sequence.
inline Tensor query(const Tensor& x_e) {
  if (x_e.rank() != 2 || x_e.rows() == 0) throw ShapeError("query: empty sequence");
  return row(x_e, 0);
}

namespace detail {

inline Selection rank_candidates(std::span<const double> q, const KeySet& keys,
                                 const std::vector<std::size_t>& candidates, std::size_t k) {
  if (vector_norm(q) == 0.0) throw ShapeError("select: query is the zero vector");
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t idx : candidates) {
    if (idx >= keys.size())
      throw ConfigError("select: index " + std::to_string(idx) + " out of range for " +
                        std::to_string(keys.size()) + " keys");
    if (keys.keys[idx].size() != q.size())
      throw ShapeError("select: key dimension " + std::to_string(keys.keys[idx].size()) + " vs query " +
                       std::to_string(q.size()));
    scored.emplace_back(cosine(q, keys.keys[idx].data()), idx);
  }
  // Highest score first; ties resolve to the lowest index.
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  Selection sel;
  for (std::size_t i = 0; i < k; ++i) {
    sel.scores.push_back(scored[i].first);
    sel.indices.push_back(scored[i].second);
  }
  return sel;
}

}  // namespace detail

// Top-K keys by cosine similarity with q over the whole pool.
inline Selection select(std::span<const double> q, const KeySet& keys, std::size_t k = 1) {
  if (k < 1 || k > keys.size())
    throw ConfigError("select: K=" + std::to_string(k) + " must be in [1, " + std::to_string(keys.size()) + "]");
  std::vector<std::size_t> all(keys.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return detail::rank_candidates(q, keys, all, k);
}

// Argmax of cosine similarity restricted to `allowed`.
inline Selection select_masked(std::span<const double> q, const KeySet& keys,
                               const std::vector<std::size_t>& allowed) {
  if (allowed.empty()) throw ConfigError("select_masked: allowed index list is empty");
  return detail::rank_candidates(q, keys, allowed, 1);
}

struct AdaptedEmbedding {
  Tensor matrix;               // [K * L_p + L, D]
  std::size_t prompt_len = 0;  // K * L_p
};

// X_p = concat(P_{i_1}, ..., P_{i_K}, X_e) along the row axis.
inline AdaptedEmbedding adapt(const Selection& selection, const ParameterPool& pool, const Tensor& x_e) {
  if (x_e.rank() != 2 || x_e.cols() != pool.d_model)
    throw ShapeError("adapt: embedding " + shape_str(x_e.shape()) + " does not match pool width " +
                     std::to_string(pool.d_model));
  std::vector<Tensor> parts;
  for (std::size_t idx : selection.indices) {
    if (idx >= pool.size()) throw ConfigError("adapt: selection index " + std::to_string(idx) + " out of range");
    parts.push_back(pool.matrices[idx]);
  }
  parts.push_back(x_e);
  return {concat_rows(parts), selection.indices.size() * pool.prompt_length};
}

}  // namespace mulvuln

#endif  // MULVULN_POOL_HPP
