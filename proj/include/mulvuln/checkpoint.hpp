#ifndef MULVULN_CHECKPOINT_HPP
#define MULVULN_CHECKPOINT_HPP

// Checkpoint container "mulvuln-ckpt-v1":
//   magic line   "mulvuln-ckpt-v1\n"
//   u64 LE       manifest byte length
//   manifest     JSON: version, config, meta, tensors[{name, shape, dtype,
//                offset, nbytes}] (offsets relative to the data section)
//   data         raw little-endian float64 arrays, in manifest order

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mulvuln/errors.hpp"
#include "mulvuln/model.hpp"
#include "mulvuln/optim.hpp"

namespace mulvuln {

inline constexpr std::string_view kCheckpointVersion = "mulvuln-ckpt-v1";

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct CheckpointContainer {
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_container(const CheckpointContainer& c) {
  nlohmann::ordered_json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["config"] = c.config;
  manifest["meta"] = c.meta;
  manifest["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& a : c.arrays) {
    if (shape_numel(a.shape) != a.values.size())
      throw ShapeError("checkpoint: array '" + a.name + "' size does not match shape " + shape_str(a.shape));
    nlohmann::ordered_json t;
    t["name"] = a.name;
    t["shape"] = a.shape;
    t["dtype"] = "f64";
    t["offset"] = offset;
    t["nbytes"] = a.values.size() * 8;
    offset += a.values.size() * 8;
    manifest["tensors"].push_back(std::move(t));
  }
  const std::string text = manifest.dump();
  std::string out(kCheckpointVersion);
  out.push_back('\n');
  detail::put_u64_le(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& a : c.arrays)
    for (double v : a.values) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline CheckpointContainer parse_container(const std::string& bytes) {
  const std::string magic = std::string(kCheckpointVersion) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) {
    const auto nl = bytes.find('\n');
    throw DataError("checkpoint version mismatch: expected '" + std::string(kCheckpointVersion) + "', found '" +
                    bytes.substr(0, std::min<std::size_t>(nl, 32)) + "'");
  }
  if (bytes.size() < magic.size() + 8) throw DataError("checkpoint truncated");
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t mlen = detail::get_u64_le(base + magic.size());
  const std::size_t data_start = magic.size() + 8 + mlen;
  if (data_start > bytes.size()) throw DataError("checkpoint truncated in manifest");
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(bytes.substr(magic.size() + 8, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest unreadable: ") + e.what());
  }
  if (manifest.value("version", std::string()) != kCheckpointVersion)
    throw DataError("checkpoint version mismatch in manifest");
  CheckpointContainer c;
  c.config = manifest["config"];
  c.meta = manifest["meta"];
  for (const auto& t : manifest["tensors"]) {
    NamedArray a;
    a.name = t.at("name").get<std::string>();
    a.shape = t.at("shape").get<Shape>();
    if (t.at("dtype").get<std::string>() != "f64") throw DataError("checkpoint: unsupported dtype for " + a.name);
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto nbytes = t.at("nbytes").get<std::uint64_t>();
    if (nbytes != shape_numel(a.shape) * 8) throw DataError("checkpoint: byte count mismatch for " + a.name);
    if (data_start + offset + nbytes > bytes.size()) throw DataError("checkpoint truncated in array " + a.name);
    a.values.resize(nbytes / 8);
    for (std::size_t i = 0; i < a.values.size(); ++i)
      a.values[i] = std::bit_cast<double>(detail::get_u64_le(base + data_start + offset + 8 * i));
    c.arrays.push_back(std::move(a));
  }
  return c;
}

inline void write_container(const std::string& path, const CheckpointContainer& c) {
  const std::string bytes = serialize_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CheckpointContainer read_container(const std::string& path) { return parse_container(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// Model configuration <-> manifest

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg, const LanguageAssignment& assignment,
                                                   std::uint64_t tokenizer_hash) {
  nlohmann::ordered_json j;
  j["n_layers"] = cfg.encoder.n_layers;
  j["n_heads"] = cfg.encoder.n_heads;
  j["d_model"] = cfg.encoder.d_model;
  j["d_ffn"] = cfg.encoder.d_ffn;
  j["max_positions"] = cfg.encoder.max_positions;
  j["dropout_rate"] = cfg.encoder.dropout_rate;
  j["vocab_size"] = cfg.vocab_size;
  j["max_tokens"] = cfg.max_tokens;
  j["S"] = cfg.pool_size;
  j["L_p"] = cfg.prompt_length;
  j["K"] = cfg.top_k;
  j["matrices_per_language"] = cfg.matrices_per_language;
  j["mode"] = pool_mode_name(cfg.mode);
  j["query_from"] = query_source_name(cfg.query_from);
  j["lambda"] = cfg.lambda;
  j["init_std"] = cfg.init_std;
  j["surrogate_query_grad"] = cfg.surrogate_query_grad;
  j["assignment"] = assignment.to_string();
  j["tokenizer_hash"] = hex64(tokenizer_hash);
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  auto need = [&](const char* key) -> const nlohmann::ordered_json& {
    if (!j.contains(key)) throw DataError(std::string("checkpoint manifest lacks field '") + key + "'");
    return j.at(key);
  };
  ModelConfig c;
  try {
    c.encoder.n_layers = need("n_layers").get<std::size_t>();
    c.encoder.n_heads = need("n_heads").get<std::size_t>();
    c.encoder.d_model = need("d_model").get<std::size_t>();
    c.encoder.d_ffn = need("d_ffn").get<std::size_t>();
    c.encoder.max_positions = need("max_positions").get<std::size_t>();
    c.encoder.dropout_rate = need("dropout_rate").get<double>();
    c.vocab_size = need("vocab_size").get<std::size_t>();
    c.max_tokens = need("max_tokens").get<std::size_t>();
    c.pool_size = need("S").get<std::size_t>();
    c.prompt_length = need("L_p").get<std::size_t>();
    c.top_k = need("K").get<std::size_t>();
    c.matrices_per_language = need("matrices_per_language").get<std::size_t>();
    c.mode = parse_pool_mode(need("mode").get<std::string>());
    c.query_from = parse_query_source(need("query_from").get<std::string>());
    c.lambda = need("lambda").get<double>();
    c.init_std = need("init_std").get<double>();
    c.surrogate_query_grad = need("surrogate_query_grad").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest has a malformed field: ") + e.what());
  }
  return c;
}

// Throws naming the first field in which `got` differs from `expected`.
inline void require_config_match(const ModelConfig& expected, const ModelConfig& got) {
  auto check = [](const char* field, auto e, auto g) {
    if (e != g) {
      std::ostringstream os;
      os << "checkpoint field " << field << " = " << g << " does not match expected " << e;
      throw ConfigError(os.str());
    }
  };
  check("n_layers", expected.encoder.n_layers, got.encoder.n_layers);
  check("n_heads", expected.encoder.n_heads, got.encoder.n_heads);
  check("d_model", expected.encoder.d_model, got.encoder.d_model);
  check("d_ffn", expected.encoder.d_ffn, got.encoder.d_ffn);
  check("max_positions", expected.encoder.max_positions, got.encoder.max_positions);
  check("vocab_size", expected.vocab_size, got.vocab_size);
  check("S", expected.pool_size, got.pool_size);
  check("L_p", expected.prompt_length, got.prompt_length);
  check("K", expected.top_k, got.top_k);
  check("matrices_per_language", expected.matrices_per_language, got.matrices_per_language);
  check("mode", std::string(pool_mode_name(expected.mode)), std::string(pool_mode_name(got.mode)));
}

// ---------------------------------------------------------------------------
// Model + optimizer checkpoints

struct TrainingMeta {
  std::size_t epoch = 0;        // completed epochs
  std::size_t best_epoch = 0;   // 0 = none yet
  double best_val_f1 = -1.0;
};

struct LoadedCheckpoint {
  MulVulnModel model;
  std::optional<AdamState> adam_state;
  AdamConfig adam_config;
  TrainingMeta meta;
};

inline CheckpointContainer make_checkpoint(const MulVulnModel& model, const Adam* optimizer = nullptr,
                                           const TrainingMeta& meta = {}) {
  CheckpointContainer c;
  const std::uint64_t hash = model.vocab() ? model.vocab()->fingerprint() : 0;
  c.config = model_config_to_json(model.config(), model.assignment, hash);
  c.meta["epoch"] = meta.epoch;
  c.meta["best_epoch"] = meta.best_epoch;
  c.meta["best_val_f1"] = meta.best_val_f1;
  const ParamList params = model.parameters();
  for (const auto& p : params)
    c.arrays.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  if (optimizer) {
    const auto& st = optimizer->state();
    const auto& ac = optimizer->config();
    c.meta["adam"] = {{"lr", ac.lr}, {"beta1", ac.beta1}, {"beta2", ac.beta2}, {"eps", ac.eps}, {"step", st.step}};
    if (!st.m.empty()) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        c.arrays.push_back({"adam.m." + params[i].name, params[i].tensor.shape(), st.m[i]});
        c.arrays.push_back({"adam.v." + params[i].name, params[i].tensor.shape(), st.v[i]});
      }
    }
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const MulVulnModel& model, const Adam* optimizer = nullptr,
                            const TrainingMeta& meta = {}) {
  write_container(path, make_checkpoint(model, optimizer, meta));
}

namespace detail {
inline std::string governing_field(const std::string& name) {
  if (name.rfind("pool.P.", 0) == 0) return "L_p";
  if (name == "embed.token") return "vocab_size";
  if (name == "embed.position") return "max_positions";
  if (name.find("ffn") != std::string::npos) return "d_ffn";
  return "d_model";
}
}  // namespace detail

// Rebuilds a model from a checkpoint. With `expected`, the manifest must agree
// with it field by field; the vocabulary must match the recorded hash.
inline LoadedCheckpoint load_checkpoint(const std::string& path, std::shared_ptr<const Vocabulary> vocab,
                                        const ModelConfig* expected = nullptr) {
  const CheckpointContainer c = read_container(path);
  const ModelConfig cfg = model_config_from_json(c.config);
  if (expected) require_config_match(*expected, cfg);
  if (vocab) {
    const std::string want = c.config.value("tokenizer_hash", std::string());
    if (want != hex64(vocab->fingerprint()))
      throw ConfigError("checkpoint field tokenizer_hash = " + want + " does not match vocabulary " +
                        hex64(vocab->fingerprint()));
  }
  LoadedCheckpoint out;
  try {
    out.model = MulVulnModel::init_random(cfg, vocab, 0);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config invalid: ") + e.what());
  }
  if (c.config.contains("assignment")) {
    out.model.assignment = LanguageAssignment::parse(c.config["assignment"].get<std::string>());
  }
  out.model.visit_parameters([&](const std::string& name, Tensor& t) {
    const NamedArray* a = c.find(name);
    if (!a) throw DataError("checkpoint is missing tensor '" + name + "'");
    if (a->shape != t.shape())
      throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(a->shape) + " but manifest field " +
                      detail::governing_field(name) + " implies " + shape_str(t.shape()));
    std::copy(a->values.begin(), a->values.end(), t.mutable_data().begin());
  });
  if (c.meta.contains("adam")) {
    const auto& aj = c.meta["adam"];
    out.adam_config = {aj.at("lr").get<double>(), aj.at("beta1").get<double>(), aj.at("beta2").get<double>(),
                       aj.at("eps").get<double>()};
    AdamState st;
    st.step = aj.at("step").get<std::uint64_t>();
    for (const auto& p : out.model.parameters()) {
      const NamedArray* m = c.find("adam.m." + p.name);
      const NamedArray* v = c.find("adam.v." + p.name);
      if (!m || !v) break;
      st.m.push_back(m->values);
      st.v.push_back(v->values);
    }
    if (!st.m.empty() && st.m.size() != out.model.parameters().size())
      throw DataError("checkpoint optimizer state is incomplete");
    out.adam_state = std::move(st);
  }
  out.meta.epoch = c.meta.value("epoch", std::size_t{0});
  out.meta.best_epoch = c.meta.value("best_epoch", std::size_t{0});
  out.meta.best_val_f1 = c.meta.value("best_val_f1", -1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Encoder-only weights (embedding tables + attention stack), the form a
// converted pretrained encoder arrives in.

inline void save_encoder_weights(const std::string& path, const Embedding& embedding, const EncoderStack& encoder) {
  CheckpointContainer c;
  const auto& e = encoder.config();
  c.config = {{"n_layers", e.n_layers}, {"n_heads", e.n_heads}, {"d_model", e.d_model}, {"d_ffn", e.d_ffn},
              {"max_positions", e.max_positions}};
  ParamList params;
  embedding.collect(params);
  encoder.collect(params);
  for (const auto& p : params)
    c.arrays.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  write_container(path, c);
}

// Copies every embed.* / encoder.* array into the given modules. All missing
// names and shape mismatches are reported together; nothing is written unless
// every array fits. Extra arrays in the file are ignored.
inline void load_encoder_weights(const std::string& path, Embedding& embedding, EncoderStack& encoder) {
  const CheckpointContainer c = read_container(path);
  ParamList params;
  embedding.collect(params);
  encoder.collect(params);
  std::vector<std::string> problems;
  for (const auto& p : params) {
    const NamedArray* a = c.find(p.name);
    if (!a) problems.push_back(p.name + " missing");
    else if (a->shape != p.tensor.shape())
      problems.push_back(p.name + " has shape " + shape_str(a->shape) + ", expected " + shape_str(p.tensor.shape()));
  }
  if (!problems.empty()) {
    std::string msg = "encoder weights in '" + path + "' do not match the configuration:";
    for (const auto& pr : problems) msg += "\n  " + pr;
    throw DataError(msg);
  }
  for (auto& p : params) {
    const NamedArray* a = c.find(p.name);
    std::copy(a->values.begin(), a->values.end(), p.tensor.mutable_data().begin());
  }
}

inline void load_backbone(const std::string& path, MulVulnModel& model) {
  load_encoder_weights(path, model.embedding, model.encoder);
}

}  // namespace mulvuln

#endif  // MULVULN_CHECKPOINT_HPP
