#ifndef MULVULN_MODEL_HPP
#define MULVULN_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mulvuln/corpus.hpp"
#include "mulvuln/encoder.hpp"
#include "mulvuln/errors.hpp"
#include "mulvuln/params.hpp"
#include "mulvuln/pool.hpp"
#include "mulvuln/tensor.hpp"
#include "mulvuln/tokenizer.hpp"

namespace mulvuln {

enum class PoolMode : std::uint8_t { PoolQuery, PoolMasked, BackboneOnly };

inline std::string_view pool_mode_name(PoolMode m) {
  switch (m) {
    case PoolMode::PoolQuery: return "pool_query";
    case PoolMode::PoolMasked: return "pool_masked";
    case PoolMode::BackboneOnly: return "backbone_only";
  }
  return "pool_query";
}

inline PoolMode parse_pool_mode(std::string_view s) {
  if (s == "pool_query" || s == "query") return PoolMode::PoolQuery;
  if (s == "pool_masked" || s == "masked") return PoolMode::PoolMasked;
  if (s == "backbone_only" || s == "backbone") return PoolMode::BackboneOnly;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

// Where the retrieval query comes from.
//   embed_cls   - [CLS] row of the embedding layer output
//   embed_mean  - mean over all rows of the embedding layer output
//   encoder_cls - [CLS] row of the attention stack run on X_e without prompts
enum class QuerySource : std::uint8_t { EmbedCls, EmbedMean, EncoderCls };

inline std::string_view query_source_name(QuerySource q) {
  switch (q) {
    case QuerySource::EmbedCls: return "embed_cls";
    case QuerySource::EmbedMean: return "embed_mean";
    case QuerySource::EncoderCls: return "encoder_cls";
  }
  return "embed_mean";
}

inline QuerySource parse_query_source(std::string_view s) {
  if (s == "embed_cls" || s == "embed_output") return QuerySource::EmbedCls;
  if (s == "embed_mean") return QuerySource::EmbedMean;
  if (s == "encoder_cls") return QuerySource::EncoderCls;
  throw ConfigError("unknown query source '" + std::string(s) + "'");
}

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t vocab_size = 0;
  std::size_t max_tokens = 512;
  std::size_t pool_size = 7;       // S
  std::size_t prompt_length = 5;   // L_p
  std::size_t top_k = 1;           // K
  std::size_t matrices_per_language = 1;
  PoolMode mode = PoolMode::PoolQuery;
  QuerySource query_from = QuerySource::EmbedMean;
  double lambda = 0.01;
  double init_std = 0.02;
  bool surrogate_query_grad = true;  // false: the surrogate term moves only the keys

  std::size_t prompt_rows() const { return mode == PoolMode::BackboneOnly ? 0 : top_k * prompt_length; }

  void validate() const {
    if (vocab_size < kSpecialTokens.size()) throw ConfigError("model: vocab_size must cover the special tokens");
    if (prompt_length < 1 || prompt_length > 64) throw ConfigError("model: L_p must be in [1, 64]");
    if (pool_size < 1 || pool_size > 64) throw ConfigError("model: S must be in [1, 64]");
    if (top_k < 1 || top_k > pool_size)
      throw ConfigError("model: K=" + std::to_string(top_k) + " must be in [1, S=" + std::to_string(pool_size) + "]");
    if (!(lambda >= 0.0)) throw ConfigError("model: lambda must be >= 0");
    if (max_tokens < 2) throw ConfigError("model: max_tokens must be >= 2");
    if (mode == PoolMode::PoolMasked) {
      if (top_k != 1) throw ConfigError("model: pool_masked selection requires K=1");
      if (pool_size < kNumLanguages * matrices_per_language)
        throw ConfigError("model: pool_masked needs S >= 7 * matrices_per_language");
    }
    encoder.validate(top_k * prompt_length);
    if (encoder.max_positions < max_tokens)
      throw ConfigError("model: max_positions must be >= max_tokens");
  }
};

struct ForwardResult {
  Tensor logits;                     // [2]
  Tensor query;                      // [D]
  Tensor phi_star;                   // scalar; undefined in backbone_only mode
  std::optional<Selection> selection;
};

struct Prediction {
  double logit0 = 0.0, logit1 = 0.0;
  double probability = 0.5;  // softmax(logits)[1]
  int label = 0;
  std::optional<Selection> selection;
};

// L_CE(logits, label) - lambda * phi_star
inline Tensor joint_loss(const Tensor& logits, int label, const Tensor& phi_star, double lambda) {
  Tensor ce = cross_entropy_logits(logits, static_cast<std::size_t>(label));
  if (!phi_star.defined() || lambda == 0.0) return ce;
  return sub(ce, scale(phi_star, lambda));
}

// argmax over two logits; exact ties go to class 0.
inline int decide(double logit0, double logit1) { return logit1 > logit0 ? 1 : 0; }

class MulVulnModel {
 public:
  MulVulnModel() = default;

  static MulVulnModel init_random(const ModelConfig& cfg, std::shared_ptr<const Vocabulary> vocab,
                                  std::uint64_t seed) {
    cfg.validate();
    if (vocab && vocab->size() != cfg.vocab_size)
      throw ConfigError("model: vocab_size " + std::to_string(cfg.vocab_size) + " does not match vocabulary size " +
                        std::to_string(vocab->size()));
    MulVulnModel m;
    m.cfg_ = cfg;
    m.vocab_ = std::move(vocab);
    std::mt19937_64 rng(seed);
    const std::size_t d = cfg.encoder.d_model;
    m.embedding = Embedding::init_random(cfg.vocab_size, cfg.encoder.max_positions, d, rng, cfg.init_std);
    m.encoder = EncoderStack::init_random(cfg.encoder, rng, cfg.init_std);
    m.pool = ParameterPool::init_random(cfg.pool_size, cfg.prompt_length, d, rng, cfg.init_std);
    m.keys = KeySet::init_random(cfg.pool_size, d, rng, cfg.init_std);
    m.assignment = LanguageAssignment::contiguous(cfg.matrices_per_language);
    if (cfg.mode == PoolMode::PoolMasked) m.assignment.validate(cfg.pool_size);
    m.classifier_w = normal_init({d, 2}, cfg.init_std, rng);
    m.classifier_b = constant_init({2}, 0.0);
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  void set_mode(PoolMode mode) {
    cfg_.mode = mode;
    cfg_.validate();
  }
  void set_lambda(double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("model: lambda must be >= 0");
    cfg_.lambda = lambda;
  }
  const std::shared_ptr<const Vocabulary>& vocab() const { return vocab_; }
  void set_vocab(std::shared_ptr<const Vocabulary> v) { vocab_ = std::move(v); }

  TokenSequence tokenize(const CodeSample& sample) const {
    if (!vocab_) throw ConfigError("model: no vocabulary attached");
    return encode(sample.code, *vocab_, cfg_.max_tokens);
  }

  Tensor compute_query(const Tensor& x_e) const {
    switch (cfg_.query_from) {
      case QuerySource::EmbedCls: return query(x_e);
      case QuerySource::EmbedMean: return mean_rows(x_e);
      case QuerySource::EncoderCls: return row(encoder.encode(x_e), 0);
    }
    return query(x_e);
  }

  // Selection rule for one input: language-restricted during masked
  // training, unrestricted top-K otherwise.
  Selection choose(std::span<const double> q, Language lang, bool train_mode) const {
    if (cfg_.mode == PoolMode::PoolMasked && train_mode) return select_masked(q, keys, assignment.allowed(lang));
    return select(q, keys, cfg_.top_k);
  }

  ForwardResult forward(const TokenSequence& tokens, Language lang, bool train_mode,
                        std::mt19937_64* dropout_rng = nullptr) const {
    ForwardResult out;
    const Tensor x_e = embedding.embed(tokens);
    Tensor pooled;
    if (cfg_.mode == PoolMode::BackboneOnly) {
      const Tensor h = encoder.encode(x_e, {}, train_mode ? dropout_rng : nullptr);
      pooled = row(h, 0);
    } else {
      if (cfg_.surrogate_query_grad) {
        out.query = compute_query(x_e);
      } else {
        NoGradGuard no_grad;
        out.query = compute_query(x_e);
      }
      Selection sel = choose(out.query.data(), lang, train_mode);
      Tensor phi;
      for (std::size_t idx : sel.indices) {
        Tensor c = cosine_similarity(out.query, keys.keys[idx]);
        phi = phi.defined() ? add(phi, c) : c;
      }
      out.phi_star = sel.indices.size() == 1 ? phi : scale(phi, 1.0 / static_cast<double>(sel.indices.size()));
      const AdaptedEmbedding x_p = adapt(sel, pool, x_e);
      const Tensor h = encoder.encode(x_p.matrix, {}, train_mode ? dropout_rng : nullptr);
      pooled = mean_rows(h, 0, x_p.prompt_len);
      out.selection = std::move(sel);
    }
    out.logits = add_bias(matmul(pooled, classifier_w), classifier_b);
    return out;
  }

  ForwardResult forward(const CodeSample& sample, bool train_mode, std::mt19937_64* dropout_rng = nullptr) const {
    return forward(tokenize(sample), sample.language, train_mode, dropout_rng);
  }

  Tensor loss(const ForwardResult& fr, int label) const {
    return joint_loss(fr.logits, label, fr.phi_star, cfg_.lambda);
  }

  Prediction predict(const CodeSample& sample) const {
    NoGradGuard guard;
    const ForwardResult fr = forward(sample, false);
    return make_prediction(fr);
  }

  std::vector<Prediction> predict_batch(const std::vector<CodeSample>& samples) const {
    std::vector<Prediction> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(predict(s));
    return out;
  }

  static Prediction make_prediction(const ForwardResult& fr) {
    Prediction p;
    p.logit0 = fr.logits[0];
    p.logit1 = fr.logits[1];
    const double mx = std::max(p.logit0, p.logit1);
    const double e0 = std::exp(p.logit0 - mx), e1 = std::exp(p.logit1 - mx);
    p.probability = e1 / (e0 + e1);
    p.label = decide(p.logit0, p.logit1);
    p.selection = fr.selection;
    return p;
  }

  // Calls f(name, tensor&) for every learnable tensor in checkpoint order.
  template <class F>
  void visit_parameters(F&& f) {
    ParamList list = parameters();
    std::size_t i = 0;
    auto next = [&](Tensor& t) { f(list[i++].name, t); };
    next(embedding.token_table);
    next(embedding.position_table);
    for (auto& L : encoder.layers) {
      for (Tensor* t : {&L.ln1_gamma, &L.ln1_beta, &L.wq, &L.bq, &L.wk, &L.wv, &L.bv, &L.wo, &L.bo,
                        &L.ln2_gamma, &L.ln2_beta, &L.w1, &L.b1, &L.w2, &L.b2})
        next(*t);
    }
    for (auto& m : pool.matrices) next(m);
    for (auto& k : keys.keys) next(k);
    next(classifier_w);
    next(classifier_b);
  }

  // All learnable tensors in checkpoint order.
  ParamList parameters() const {
    ParamList out;
    embedding.collect(out);
    encoder.collect(out);
    pool.collect(out);
    keys.collect(out);
    out.push_back({"classifier.w", classifier_w});
    out.push_back({"classifier.b", classifier_b});
    return out;
  }

  // Deep copy; the clone shares no parameter storage with this model.
  MulVulnModel clone() const {
    MulVulnModel m = *this;
    m.visit_parameters([](const std::string&, Tensor& t) { t = Tensor::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true); });
    return m;
  }

  Embedding embedding;
  EncoderStack encoder;
  ParameterPool pool;
  KeySet keys;
  LanguageAssignment assignment;
  Tensor classifier_w;  // [D, 2]
  Tensor classifier_b;  // [2]

 private:
  ModelConfig cfg_;
  std::shared_ptr<const Vocabulary> vocab_;
};

}  // namespace mulvuln

#endif  // MULVULN_MODEL_HPP
