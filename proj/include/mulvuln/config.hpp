#ifndef MULVULN_CONFIG_HPP
#define MULVULN_CONFIG_HPP

// Run configuration: a plain key=value file, '#' starts a comment. Values set
// on the command line override the file, which overrides the defaults.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mulvuln/corpus.hpp"
#include "mulvuln/errors.hpp"
#include "mulvuln/model.hpp"
#include "mulvuln/trainer.hpp"

namespace mulvuln {

inline constexpr const char* kDataRootEnv = "MULVULN_DATA_ROOT";

struct RunConfig {
  std::string data;          // line-delimited JSON records (raw or preprocessed)
  std::string vocab;         // vocabulary file; built from the training split when empty
  bool external_vocab = false;
  std::size_t vocab_size = 2000;
  SplitRatios ratios;
  std::string out;
  std::string assignment;    // explicit language -> pool index map, "C:0;CPP:1;..."
  std::string backbone;      // encoder-only weights to start from
  ModelConfig model;
  TrainConfig train;

  std::uint64_t seed() const { return train.seed; }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(r);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

}  // namespace detail

inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  auto& m = c.model;
  auto& t = c.train;
  if (key == "data") c.data = value;
  else if (key == "vocab") c.vocab = value;
  else if (key == "external_vocab") c.external_vocab = parse_bool(key, value);
  else if (key == "vocab_size") c.vocab_size = parse_size(key, value);
  else if (key == "train_ratio") c.ratios.train = parse_real(key, value);
  else if (key == "val_ratio") c.ratios.val = parse_real(key, value);
  else if (key == "test_ratio") c.ratios.test = parse_real(key, value);
  else if (key == "out") c.out = value;
  else if (key == "assignment") c.assignment = value;
  else if (key == "backbone") c.backbone = value;
  else if (key == "n_layers") m.encoder.n_layers = parse_size(key, value);
  else if (key == "n_heads") m.encoder.n_heads = parse_size(key, value);
  else if (key == "d_model") m.encoder.d_model = parse_size(key, value);
  else if (key == "d_ffn") m.encoder.d_ffn = parse_size(key, value);
  else if (key == "max_positions") m.encoder.max_positions = parse_size(key, value);
  else if (key == "dropout") m.encoder.dropout_rate = parse_real(key, value);
  else if (key == "max_tokens") m.max_tokens = parse_size(key, value);
  else if (key == "pool_size") m.pool_size = parse_size(key, value);
  else if (key == "lp") m.prompt_length = parse_size(key, value);
  else if (key == "topk") m.top_k = parse_size(key, value);
  else if (key == "matrices_per_language") m.matrices_per_language = parse_size(key, value);
  else if (key == "mode") m.mode = parse_pool_mode(value);
  else if (key == "query_from") m.query_from = parse_query_source(value);
  else if (key == "lambda") m.lambda = parse_real(key, value);
  else if (key == "init_std") m.init_std = parse_real(key, value);
  else if (key == "surrogate_query_grad") m.surrogate_query_grad = parse_bool(key, value);
  else if (key == "epochs") t.epochs = parse_size(key, value);
  else if (key == "batch_size") t.batch_size = parse_size(key, value);
  else if (key == "lr") t.adam.lr = parse_real(key, value);
  else if (key == "beta1") t.adam.beta1 = parse_real(key, value);
  else if (key == "beta2") t.adam.beta2 = parse_real(key, value);
  else if (key == "eps") t.adam.eps = parse_real(key, value);
  else if (key == "clip_norm") t.clip_norm = parse_real(key, value);
  else if (key == "seed") t.seed = parse_size(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key=value");
    apply_setting(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

// Full snapshot; parse_config_text(to_text(c)) reproduces c.
inline std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  if (!c.data.empty()) os << "data=" << c.data << "\n";
  if (!c.vocab.empty()) os << "vocab=" << c.vocab << "\n";
  os << "external_vocab=" << (c.external_vocab ? "true" : "false") << "\n"
     << "vocab_size=" << c.vocab_size << "\n"
     << "train_ratio=" << c.ratios.train << "\n"
     << "val_ratio=" << c.ratios.val << "\n"
     << "test_ratio=" << c.ratios.test << "\n";
  if (!c.out.empty()) os << "out=" << c.out << "\n";
  if (!c.assignment.empty()) os << "assignment=" << c.assignment << "\n";
  if (!c.backbone.empty()) os << "backbone=" << c.backbone << "\n";
  os << config_lines(c.model, c.train);
  return os.str();
}

// Cross-field checks that do not need a vocabulary.
inline void validate(const RunConfig& c) {
  const auto& m = c.model;
  if (m.prompt_length < 1 || m.prompt_length > 64)
    throw ConfigError("config: lp=" + std::to_string(m.prompt_length) + " outside [1, 64]");
  if (m.pool_size < 1 || m.pool_size > 64)
    throw ConfigError("config: pool_size=" + std::to_string(m.pool_size) + " outside [1, 64]");
  if (m.top_k < 1 || m.top_k > m.pool_size)
    throw ConfigError("config: topk=" + std::to_string(m.top_k) + " must be in [1, pool_size]");
  if (m.encoder.max_positions < 512 + m.top_k * m.prompt_length)
    throw ConfigError("config: max_positions=" + std::to_string(m.encoder.max_positions) + " < 512 + topk*lp = " +
                      std::to_string(512 + m.top_k * m.prompt_length));
  if (c.vocab_size < 8) throw ConfigError("config: vocab_size must be >= 8");
  ModelConfig probe = m;
  probe.vocab_size = kSpecialTokens.size();
  probe.validate();
  c.train.validate();
  if (!c.assignment.empty()) LanguageAssignment::parse(c.assignment).validate(m.pool_size);
}

// Relative data paths resolve against $MULVULN_DATA_ROOT when it is set.
inline std::string resolve_data_path(const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  if (const char* root = std::getenv(kDataRootEnv); root && *root) return (std::filesystem::path(root) / p).string();
  return path;
}

}  // namespace mulvuln

#endif  // MULVULN_CONFIG_HPP
