#ifndef MULVULN_ENCODER_HPP
#define MULVULN_ENCODER_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mulvuln/errors.hpp"
#include "mulvuln/params.hpp"
#include "mulvuln/tensor.hpp"
#include "mulvuln/tokenizer.hpp"

namespace mulvuln {

struct EncoderConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ffn = 64;
  std::size_t max_positions = 517;
  double dropout_rate = 0.0;

  // prompt_rows: the largest number of prompt rows that will be prepended.
  void validate(std::size_t prompt_rows) const {
    if (n_layers < 1) throw ConfigError("encoder: n_layers must be >= 1");
    if (n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("encoder: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                        std::to_string(n_heads));
    if (d_ffn < 1) throw ConfigError("encoder: d_ffn must be >= 1");
    if (max_positions < 512 + prompt_rows)
      throw ConfigError("encoder: max_positions " + std::to_string(max_positions) + " must be >= 512 + " +
                        std::to_string(prompt_rows));
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("encoder: dropout_rate must be in [0,1)");
  }
};

// Token and learned absolute position tables (the embedding layer).
class Embedding {
 public:
  Embedding() = default;

  static Embedding init_random(std::size_t vocab_size, std::size_t max_positions, std::size_t d_model,
                               std::mt19937_64& rng, double stddev = 0.02) {
    Embedding e;
    e.token_table = normal_init({vocab_size, d_model}, stddev, rng);
    e.position_table = normal_init({max_positions, d_model}, stddev, rng);
    return e;
  }

  // X_e[i] = token_table[ids[i]] + position_table[i]
  Tensor embed(const TokenSequence& tokens) const {
    if (tokens.ids.empty()) throw ShapeError("embed: empty token sequence");
    if (tokens.ids.size() > position_table.rows())
      throw ShapeError("embed: sequence length " + std::to_string(tokens.ids.size()) + " exceeds " +
                       std::to_string(position_table.rows()) + " positions");
    const Tensor tok = gather_rows(token_table, tokens.ids);
    std::vector<std::int32_t> positions(tokens.ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i);
    return add(tok, gather_rows(position_table, positions));
  }

  void collect(ParamList& out) const {
    out.push_back({"embed.token", token_table});
    out.push_back({"embed.position", position_table});
  }

  Tensor token_table;     // [V, D]
  Tensor position_table;  // [P, D]
};

struct EncoderLayer {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, wv, bv, wo, bo;  // no key bias: softmax rows ignore it
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;
};

// Attention probabilities captured during a forward pass, [layer][head].
using AttentionTrace = std::vector<std::vector<Tensor>>;

// Pre-norm transformer encoder stack:
//   h   = x + Wo * MHA(LN1(x))
//   out = h + W2 * gelu(W1 * LN2(h))
class EncoderStack {
 public:
  EncoderStack() = default;

  static EncoderStack init_random(const EncoderConfig& cfg, std::mt19937_64& rng, double stddev = 0.02) {
    EncoderStack s;
    s.cfg_ = cfg;
    const std::size_t d = cfg.d_model, f = cfg.d_ffn;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      EncoderLayer L;
      L.ln1_gamma = constant_init({d}, 1.0);
      L.ln1_beta = constant_init({d}, 0.0);
      L.wq = normal_init({d, d}, stddev, rng);
      L.bq = constant_init({d}, 0.0);
      L.wk = normal_init({d, d}, stddev, rng);
      L.wv = normal_init({d, d}, stddev, rng);
      L.bv = constant_init({d}, 0.0);
      L.wo = normal_init({d, d}, stddev, rng);
      L.bo = constant_init({d}, 0.0);
      L.ln2_gamma = constant_init({d}, 1.0);
      L.ln2_beta = constant_init({d}, 0.0);
      L.w1 = normal_init({d, f}, stddev, rng);
      L.b1 = constant_init({f}, 0.0);
      L.w2 = normal_init({f, d}, stddev, rng);
      L.b2 = constant_init({d}, 0.0);
      s.layers.push_back(std::move(L));
    }
    return s;
  }

  const EncoderConfig& config() const { return cfg_; }

  // x: [N, D]. `valid` (optional) flags the positions that may be attended
  // to. `rng` enables dropout when the configured rate is positive.
  Tensor encode(const Tensor& x, std::span<const std::uint8_t> valid = {}, std::mt19937_64* rng = nullptr,
                AttentionTrace* trace = nullptr) const {
    if (x.rank() != 2 || x.cols() != cfg_.d_model)
      throw ShapeError("encode: expected (N," + std::to_string(cfg_.d_model) + "), got " + shape_str(x.shape()));
    if (x.rows() > cfg_.max_positions)
      throw ShapeError("encode: " + std::to_string(x.rows()) + " rows exceed max_positions " +
                       std::to_string(cfg_.max_positions));
    if (!valid.empty() && valid.size() != x.rows())
      throw ShapeError("encode: mask length " + std::to_string(valid.size()) + " does not match " +
                       std::to_string(x.rows()) + " rows");
    const std::size_t heads = cfg_.n_heads;
    const std::size_t dh = cfg_.d_model / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor h = x;
    if (trace) trace->assign(layers.size(), {});
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const EncoderLayer& L = layers[li];
      const Tensor xn = layer_norm(h, L.ln1_gamma, L.ln1_beta);
      const Tensor q = add_bias(matmul(xn, L.wq), L.bq);
      const Tensor k = matmul(xn, L.wk);
      const Tensor v = add_bias(matmul(xn, L.wv), L.bv);
      std::vector<Tensor> head_out;
      head_out.reserve(heads);
      for (std::size_t hd = 0; hd < heads; ++hd) {
        const std::size_t c0 = hd * dh, c1 = c0 + dh;
        const Tensor qh = heads == 1 ? q : slice_cols(q, c0, c1);
        const Tensor kh = heads == 1 ? k : slice_cols(k, c0, c1);
        const Tensor vh = heads == 1 ? v : slice_cols(v, c0, c1);
        const Tensor probs = softmax_rows(scale(matmul_bt(qh, kh), inv_sqrt), valid);
        if (trace) (*trace)[li].push_back(probs.detach());
        head_out.push_back(matmul(probs, vh));
      }
      const Tensor attn = heads == 1 ? head_out.front() : concat_cols(head_out);
      h = add(h, maybe_dropout(add_bias(matmul(attn, L.wo), L.bo), rng));
      const Tensor hn = layer_norm(h, L.ln2_gamma, L.ln2_beta);
      const Tensor ff = add_bias(matmul(gelu(add_bias(matmul(hn, L.w1), L.b1)), L.w2), L.b2);
      h = add(h, maybe_dropout(ff, rng));
    }
    return h;
  }

  void collect(ParamList& out) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const EncoderLayer& L = layers[l];
      const std::string p = "encoder." + std::to_string(l) + ".";
      out.push_back({p + "ln1.gamma", L.ln1_gamma});
      out.push_back({p + "ln1.beta", L.ln1_beta});
      out.push_back({p + "attn.wq", L.wq});
      out.push_back({p + "attn.bq", L.bq});
      out.push_back({p + "attn.wk", L.wk});
      out.push_back({p + "attn.wv", L.wv});
      out.push_back({p + "attn.bv", L.bv});
      out.push_back({p + "attn.wo", L.wo});
      out.push_back({p + "attn.bo", L.bo});
      out.push_back({p + "ln2.gamma", L.ln2_gamma});
      out.push_back({p + "ln2.beta", L.ln2_beta});
      out.push_back({p + "ffn.w1", L.w1});
      out.push_back({p + "ffn.b1", L.b1});
      out.push_back({p + "ffn.w2", L.w2});
      out.push_back({p + "ffn.b2", L.b2});
    }
  }

  std::vector<EncoderLayer> layers;

 private:
  Tensor maybe_dropout(const Tensor& x, std::mt19937_64* rng) const {
    if (!rng || cfg_.dropout_rate <= 0.0) return x;
    std::bernoulli_distribution keep(1.0 - cfg_.dropout_rate);
    std::vector<std::uint8_t> mask(x.size());
    for (auto& m : mask) m = keep(*rng) ? 1 : 0;
    return dropout(x, cfg_.dropout_rate, std::move(mask));
  }

  EncoderConfig cfg_;
};

}  // namespace mulvuln

#endif  // MULVULN_ENCODER_HPP
