#ifndef MULVULN_TRAINER_HPP
#define MULVULN_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mulvuln/checkpoint.hpp"
#include "mulvuln/corpus.hpp"
#include "mulvuln/errors.hpp"
#include "mulvuln/eval.hpp"
#include "mulvuln/model.hpp"
#include "mulvuln/optim.hpp"

namespace mulvuln {

struct TrainConfig {
  std::size_t epochs = 5;      // n_t
  std::size_t batch_size = 16; // m
  AdamConfig adam;             // lr, beta1, beta2, eps
  std::uint64_t seed = 0;
  double clip_norm = 0.0;      // 0 disables global-norm clipping
  std::string run_dir;         // empty: nothing written to disk
  bool epoch_checkpoints = true;
  std::string config_snapshot;  // written verbatim as config.txt when set
  std::function<void(const std::string&)> log;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("train: lr must be finite and >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
      throw ConfigError("train: betas must lie in [0, 1)");
    if (!(adam.eps > 0.0)) throw ConfigError("train: eps must be > 0");
    if (!(clip_norm >= 0.0)) throw ConfigError("train: clip norm must be >= 0");
  }
};

// Selection counts per language: counts[language][pool index].
using SelectionCounts = std::array<std::vector<std::size_t>, kNumLanguages>;

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double initial_loss = 0.0;
  double train_loss = 0.0;
  MetricsReport val;
  SelectionCounts train_selection;  // selections made by the training forward passes
  SelectionCounts val_selection;    // unrestricted selections on the validation split
  std::vector<std::string> untouched;  // parameters that received no gradient this epoch
  std::size_t key_reinits = 0;
};

struct TrainHistory {
  double initial_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;

  double final_train_loss() const { return epochs.empty() ? initial_loss : epochs.back().train_loss; }
};

struct TrainOutcome {
  MulVulnModel best;
  MulVulnModel last;
  Adam optimizer;
  TrainHistory history;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, epoch, purpose).
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t purpose) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ epoch) ^ purpose));
}

inline void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

inline nlohmann::ordered_json selection_to_json(const SelectionCounts& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t l = 0; l < kNumLanguages; ++l) j[std::string(language_tag(kAllLanguages[l]))] = c[l];
  return j;
}

inline SelectionCounts selection_from_json(const nlohmann::ordered_json& j) {
  SelectionCounts c;
  for (std::size_t l = 0; l < kNumLanguages; ++l) {
    const std::string tag(language_tag(kAllLanguages[l]));
    if (j.contains(tag)) c[l] = j[tag].get<std::vector<std::size_t>>();
  }
  return c;
}

}  // namespace detail

inline nlohmann::ordered_json epoch_to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["initial_loss"] = r.initial_loss;
  j["train_loss"] = r.train_loss;
  j["val"] = metrics_to_json(r.val);
  j["train_selection"] = detail::selection_to_json(r.train_selection);
  j["val_selection"] = detail::selection_to_json(r.val_selection);
  j["untouched"] = r.untouched;
  j["key_reinits"] = r.key_reinits;
  return j;
}

inline EpochRecord epoch_from_json(const nlohmann::ordered_json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.initial_loss = j.at("initial_loss").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.val = metrics_from_json(j.at("val"));
  r.train_selection = detail::selection_from_json(j.at("train_selection"));
  r.val_selection = detail::selection_from_json(j.at("val_selection"));
  r.untouched = j.at("untouched").get<std::vector<std::string>>();
  r.key_reinits = j.at("key_reinits").get<std::size_t>();
  return r;
}

inline std::vector<EpochRecord> load_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open history '" + path + "'");
  std::vector<EpochRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(epoch_from_json(nlohmann::ordered_json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("history line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
  }
  return out;
}

// key=value lines describing a model + training configuration.
inline std::string config_lines(const ModelConfig& m, const TrainConfig& t) {
  std::ostringstream os;
  os.precision(17);
  os << "n_layers=" << m.encoder.n_layers << "\n"
     << "n_heads=" << m.encoder.n_heads << "\n"
     << "d_model=" << m.encoder.d_model << "\n"
     << "d_ffn=" << m.encoder.d_ffn << "\n"
     << "max_positions=" << m.encoder.max_positions << "\n"
     << "dropout=" << m.encoder.dropout_rate << "\n"
     << "max_tokens=" << m.max_tokens << "\n"
     << "pool_size=" << m.pool_size << "\n"
     << "lp=" << m.prompt_length << "\n"
     << "topk=" << m.top_k << "\n"
     << "matrices_per_language=" << m.matrices_per_language << "\n"
     << "mode=" << pool_mode_name(m.mode) << "\n"
     << "query_from=" << query_source_name(m.query_from) << "\n"
     << "lambda=" << m.lambda << "\n"
     << "init_std=" << m.init_std << "\n"
     << "surrogate_query_grad=" << (m.surrogate_query_grad ? "true" : "false") << "\n"
     << "epochs=" << t.epochs << "\n"
     << "batch_size=" << t.batch_size << "\n"
     << "lr=" << t.adam.lr << "\n"
     << "beta1=" << t.adam.beta1 << "\n"
     << "beta2=" << t.adam.beta2 << "\n"
     << "eps=" << t.adam.eps << "\n"
     << "clip_norm=" << t.clip_norm << "\n"
     << "seed=" << t.seed << "\n";
  return os.str();
}

// Mean joint loss over `samples` without recording a graph. Train-mode
// selection, no dropout.
inline double mean_loss(const MulVulnModel& model, const std::vector<CodeSample>& samples) {
  if (samples.empty()) return 0.0;
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& s : samples) total += model.loss(model.forward(s, true), s.label).item();
  return total / static_cast<double>(samples.size());
}

namespace detail {

struct TrainLoop {
  const DatasetSplit& split;
  const TrainConfig& cfg;
  MulVulnModel model;
  Adam optimizer;
  TrainHistory history;
  MulVulnModel best;
  std::vector<TokenSequence> train_tokens;

  void log(const std::string& msg) const {
    if (cfg.log) cfg.log(msg);
  }

  std::filesystem::path dir() const { return cfg.run_dir; }

  [[noreturn]] void numerical_failure(const std::string& what, std::size_t epoch, std::size_t step) {
    std::string msg = what + " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
    if (!cfg.run_dir.empty()) {
      const auto path = (dir() / "diagnostic.ckpt").string();
      save_checkpoint(path, model, &optimizer, {epoch - 1, history.best_epoch, history.best_val_f1});
      msg += "; parameters saved to " + path;
    }
    throw NumericalError(msg);
  }

  void run_epoch(std::size_t epoch) {
    const ModelConfig& mc = model.config();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.initial_loss = history.initial_loss;
    for (auto& v : rec.train_selection) v.assign(mc.pool_size, 0);
    for (auto& v : rec.val_selection) v.assign(mc.pool_size, 0);

    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto shuffle_rng = stream_rng(cfg.seed, epoch, 1);
    shuffle_indices(order, shuffle_rng);
    auto dropout_rng = stream_rng(cfg.seed, epoch, 2);
    auto reinit_rng = stream_rng(cfg.seed, epoch, 3);

    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (const auto& p : model.parameters()) {
      params.push_back(p.tensor);
      names.push_back(p.name);
    }
    std::vector<bool> touched(params.size(), false);

    double loss_sum = 0.0;
    std::size_t n_batches = 0, step = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      ++step;
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_m = 1.0 / static_cast<double>(end - start);
      for (auto& p : params) p.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const CodeSample& s = split.train[order[b]];
        const ForwardResult fr = model.forward(train_tokens[order[b]], s.language, true, &dropout_rng);
        if (fr.selection) ++rec.train_selection[language_index(s.language)][fr.selection->i_star()];
        const Tensor loss = model.loss(fr, s.label);
        const double lv = loss.item();
        if (!std::isfinite(lv)) numerical_failure("non-finite loss on sample " + s.id, epoch, step);
        batch_loss += lv;
        backward(scale(loss, inv_m));
      }
      batch_loss *= inv_m;
      loss_sum += batch_loss;
      ++n_batches;

      std::vector<std::span<double>> pv;
      std::vector<std::span<const double>> gv;
      double sq = 0.0;
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto g = params[i].grad();
        for (double x : g) {
          if (!std::isfinite(x)) numerical_failure("non-finite gradient in " + names[i], epoch, step);
          sq += x * x;
          if (x != 0.0) touched[i] = true;
        }
      }
      if (cfg.clip_norm > 0.0) {
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          const double f = cfg.clip_norm / norm;
          for (auto& p : params)
            for (double& x : p.mutable_grad()) x *= f;
        }
      }
      for (auto& p : params) {
        pv.push_back(p.mutable_data());
        gv.push_back(p.grad());
      }
      optimizer.step(pv, gv);
      rec.key_reinits += model.keys.reinit_degenerate(reinit_rng, mc.init_std);
    }
    for (auto& p : params) p.zero_grad();
    rec.train_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    if (!std::isfinite(rec.train_loss)) numerical_failure("non-finite epoch loss", epoch, step);
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!touched[i]) rec.untouched.push_back(names[i]);

    const EvalResult ev = evaluate(model, split.val);
    rec.val = ev.overall;
    for (std::size_t i = 0; i < split.val.size(); ++i)
      if (ev.predictions[i].selection)
        ++rec.val_selection[language_index(split.val[i].language)][ev.predictions[i].selection->i_star()];

    const bool improved = rec.val.f1 > history.best_val_f1;
    if (improved) {
      history.best_val_f1 = rec.val.f1;
      history.best_epoch = epoch;
      best = model.clone();
    }
    history.epochs.push_back(rec);
    log("epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.train_loss) + " val_f1 " +
        std::to_string(rec.val.f1));

    if (!cfg.run_dir.empty()) {
      const TrainingMeta meta{epoch, history.best_epoch, history.best_val_f1};
      std::ofstream hist(dir() / "history.jsonl", std::ios::app);
      hist << epoch_to_json(rec).dump() << "\n";
      if (cfg.epoch_checkpoints)
        save_checkpoint((dir() / ("epoch_" + std::to_string(epoch) + ".ckpt")).string(), model, &optimizer, meta);
      if (improved) save_checkpoint((dir() / "best.ckpt").string(), best, nullptr, meta);
    }
  }

  void run(std::size_t first_epoch) {
    train_tokens.clear();
    train_tokens.reserve(split.train.size());
    for (const auto& s : split.train) train_tokens.push_back(model.tokenize(s));
    for (std::size_t e = first_epoch; e <= cfg.epochs; ++e) run_epoch(e);
    if (history.best_epoch == 0) best = model.clone();
  }
};

inline void write_final_metrics(const std::filesystem::path& dir, const MulVulnModel& best, const DatasetSplit& split) {
  const bool use_test = !split.test.empty();
  const auto& samples = use_test ? split.test : split.val;
  const EvalResult ev = evaluate(best, samples);
  std::ofstream txt(dir / "metrics.txt", std::ios::trunc);
  txt << "Evaluation split: " << (use_test ? "test" : "val") << " (" << samples.size() << " samples)\n\n";
  txt << render_metrics_table({{"MULVULN", ev.overall}}) << "\n";
  txt << render_breakdown(ev.by_language) << "\n";
  txt << render_breakdown(ev.by_cwe);
  std::ofstream jl(dir / "metrics.jsonl", std::ios::trunc);
  nlohmann::ordered_json j;
  j["split"] = use_test ? "test" : "val";
  j["overall"] = metrics_to_json(ev.overall);
  jl << j.dump() << "\n" << breakdown_to_jsonl(ev.by_language) << breakdown_to_jsonl(ev.by_cwe);
}

}  // namespace detail

// Algorithm 1. Returns the highest-validation-F1 model (ties: earliest epoch)
// along with the final model, optimizer and history.
inline TrainOutcome train(MulVulnModel model, const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw DataError("train: training split is empty");
  if (!model.vocab()) throw ConfigError("train: model has no vocabulary");
  if (!cfg.run_dir.empty()) {
    std::filesystem::create_directories(cfg.run_dir);
    const std::filesystem::path d = cfg.run_dir;
    std::ofstream(d / "config.txt", std::ios::trunc)
        << (cfg.config_snapshot.empty() ? config_lines(model.config(), cfg) : cfg.config_snapshot);
    save_vocab((d / "vocab.txt").string(), *model.vocab());
    std::ofstream(d / "history.jsonl", std::ios::trunc);
  }
  detail::TrainLoop loop{split, cfg, std::move(model), Adam(cfg.adam), {}, {}, {}};
  loop.history.initial_loss = mean_loss(loop.model, split.train);
  loop.run(1);
  if (!cfg.run_dir.empty()) detail::write_final_metrics(cfg.run_dir, loop.best, split);
  return {std::move(loop.best), std::move(loop.model), std::move(loop.optimizer), std::move(loop.history)};
}

// Continues a run from run_dir/epoch_{from_epoch}.ckpt up to cfg.epochs. The
// result matches an uninterrupted run with the same seed.
inline TrainOutcome resume(const DatasetSplit& split, const TrainConfig& cfg, std::size_t from_epoch,
                           std::shared_ptr<const Vocabulary> vocab) {
  cfg.validate();
  if (cfg.run_dir.empty()) throw ConfigError("resume: run directory required");
  const std::filesystem::path d = cfg.run_dir;
  LoadedCheckpoint ck = load_checkpoint((d / ("epoch_" + std::to_string(from_epoch) + ".ckpt")).string(), vocab);
  if (ck.meta.epoch != from_epoch) throw DataError("resume: checkpoint records epoch " + std::to_string(ck.meta.epoch));
  detail::TrainLoop loop{split, cfg, std::move(ck.model), Adam(cfg.adam), {}, {}, {}};
  if (ck.adam_state) loop.optimizer.state() = *ck.adam_state;
  auto records = load_history((d / "history.jsonl").string());
  if (records.size() < from_epoch) throw DataError("resume: history has fewer than " + std::to_string(from_epoch) + " epochs");
  records.resize(from_epoch);
  loop.history.initial_loss = records.empty() ? mean_loss(loop.model, split.train) : records.front().initial_loss;
  loop.history.epochs = records;
  loop.history.best_epoch = ck.meta.best_epoch;
  loop.history.best_val_f1 = ck.meta.best_val_f1;
  if (ck.meta.best_epoch > 0) loop.best = load_checkpoint((d / "best.ckpt").string(), vocab).model;
  {
    std::ofstream hist(d / "history.jsonl", std::ios::trunc);
    for (const auto& r : records) hist << epoch_to_json(r).dump() << "\n";
  }
  loop.run(from_epoch + 1);
  detail::write_final_metrics(d, loop.best, split);
  return {std::move(loop.best), std::move(loop.model), std::move(loop.optimizer), std::move(loop.history)};
}

// ---------------------------------------------------------------------------
// Ablation sweeps

enum class SweepAxis : std::uint8_t { Lambda, PromptLength, TopK, MatricesPerLanguage, Mode };

inline SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "lambda") return SweepAxis::Lambda;
  if (s == "lp" || s == "L_p") return SweepAxis::PromptLength;
  if (s == "topk" || s == "k" || s == "K") return SweepAxis::TopK;
  if (s == "mpl" || s == "matrices_per_language") return SweepAxis::MatricesPerLanguage;
  if (s == "mode") return SweepAxis::Mode;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

inline std::string_view sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::PromptLength: return "lp";
    case SweepAxis::TopK: return "topk";
    case SweepAxis::MatricesPerLanguage: return "mpl";
    case SweepAxis::Mode: return "mode";
  }
  return "lambda";
}

inline std::vector<std::string> default_sweep_values(SweepAxis a) {
  switch (a) {
    case SweepAxis::Lambda: return {"0.1", "0.3", "0.01", "0.03"};
    case SweepAxis::PromptLength: return {"1", "3", "5", "7", "9"};
    case SweepAxis::TopK: return {"1", "2", "3"};
    case SweepAxis::MatricesPerLanguage: return {"1", "2", "3"};
    case SweepAxis::Mode: return {"backbone_only", "pool_query", "pool_masked"};
  }
  return {};
}

struct SweepRow {
  std::string value;
  std::string method;  // row label in the table layout
  ModelConfig config;
  double initial_loss = 0.0;
  double final_train_loss = 0.0;
  bool finite = true;
  double val_f1 = 0.0;
  MetricsReport test;  // best checkpoint on the test split (val when test is empty)
};

struct SweepResult {
  SweepAxis axis = SweepAxis::Lambda;
  std::vector<SweepRow> rows;
  std::size_t best_row = 0;  // highest validation F1, earliest on ties
  std::string table;
};

inline std::string eq_label(PoolMode m) {
  switch (m) {
    case PoolMode::PoolQuery: return "MULVULN w/ Eq. (3)";
    case PoolMode::PoolMasked: return "MULVULN w/ Eq. (4)";
    case PoolMode::BackboneOnly: return "Backbone only";
  }
  return "";
}

inline ModelConfig sweep_config(const ModelConfig& base, SweepAxis axis, const std::string& value) {
  ModelConfig c = base;
  auto to_size = [&](const std::string& v) {
    try {
      std::size_t pos = 0;
      const unsigned long r = std::stoul(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return static_cast<std::size_t>(r);
    } catch (const std::exception&) {
      throw ConfigError("sweep: '" + v + "' is not a non-negative integer");
    }
  };
  switch (axis) {
    case SweepAxis::Lambda:
      try {
        c.lambda = std::stod(value);
      } catch (const std::exception&) {
        throw ConfigError("sweep: bad lambda '" + value + "'");
      }
      break;
    case SweepAxis::PromptLength: c.prompt_length = to_size(value); break;
    case SweepAxis::TopK:
      c.mode = PoolMode::PoolQuery;
      c.top_k = to_size(value);
      break;
    case SweepAxis::MatricesPerLanguage:
      c.mode = PoolMode::PoolMasked;
      c.top_k = 1;
      c.matrices_per_language = to_size(value);
      c.pool_size = std::max(c.pool_size, kNumLanguages * c.matrices_per_language);
      break;
    case SweepAxis::Mode: c.mode = parse_pool_mode(value); break;
  }
  if (c.mode == PoolMode::PoolMasked) c.top_k = 1;
  c.encoder.max_positions = std::max(c.encoder.max_positions, 512 + c.top_k * c.prompt_length);
  c.validate();
  return c;
}

inline std::string sweep_method_label(const ModelConfig& c, SweepAxis axis) {
  if (axis == SweepAxis::TopK)
    return "MULVULN (" + std::to_string(c.top_k) + (c.top_k == 1 ? " pm" : " pms") + ") w/ Eq. (3)";
  if (axis == SweepAxis::MatricesPerLanguage)
    return "MULVULN (" + std::to_string(c.matrices_per_language) + (c.matrices_per_language == 1 ? " pm" : " pms") +
           ") w/ Eq. (4)";
  return eq_label(c.mode);
}

inline std::string render_sweep(const SweepResult& r) {
  std::vector<std::vector<std::string>> body;
  for (const auto& row : r.rows) {
    if (r.axis == SweepAxis::PromptLength)
      body.push_back({row.method, row.value, percent(row.test.recall), percent(row.test.precision),
                      percent(row.test.f1)});
    else if (r.axis == SweepAxis::Lambda)
      body.push_back({row.method, row.value, percent(row.test.recall), percent(row.test.precision),
                      percent(row.test.f1)});
    else
      body.push_back({row.method, percent(row.test.recall), percent(row.test.precision), percent(row.test.f1)});
  }
  if (r.axis == SweepAxis::PromptLength) return render_table({"Methods", "L_p", "Recall", "Precision", "F1-score"}, body);
  if (r.axis == SweepAxis::Lambda) return render_table({"Methods", "lambda", "Recall", "Precision", "F1-score"}, body);
  return render_table({"Methods", "Recall", "Precision", "F1-score"}, body);
}

// Trains one model per axis value (same seed for each) and tabulates the
// best checkpoints' metrics.
inline SweepResult sweep(const DatasetSplit& split, const ModelConfig& base, const TrainConfig& tcfg, SweepAxis axis,
                         std::shared_ptr<const Vocabulary> vocab, std::vector<std::string> values = {}) {
  if (values.empty()) values = default_sweep_values(axis);
  std::vector<ModelConfig> configs;
  for (const auto& v : values) configs.push_back(sweep_config(base, axis, v));
  SweepResult out;
  out.axis = axis;
  for (std::size_t i = 0; i < values.size(); ++i) {
    TrainConfig t = tcfg;
    if (!tcfg.run_dir.empty())
      t.run_dir = (std::filesystem::path(tcfg.run_dir) / (std::string(sweep_axis_name(axis)) + "_" + values[i])).string();
    t.config_snapshot.clear();
    SweepRow row;
    row.value = values[i];
    row.config = configs[i];
    row.method = sweep_method_label(configs[i], axis);
    MulVulnModel m = MulVulnModel::init_random(configs[i], vocab, tcfg.seed);
    TrainOutcome res = train(std::move(m), split, t);
    row.initial_loss = res.history.initial_loss;
    row.final_train_loss = res.history.final_train_loss();
    row.finite = std::isfinite(row.initial_loss);
    for (const auto& e : res.history.epochs) row.finite = row.finite && std::isfinite(e.train_loss);
    row.val_f1 = res.history.best_val_f1;
    row.test = evaluate(res.best, split.test.empty() ? split.val : split.test).overall;
    if (tcfg.log) tcfg.log(std::string(sweep_axis_name(axis)) + "=" + values[i] + " f1 " + std::to_string(row.test.f1));
    out.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].val_f1 > out.rows[out.best_row].val_f1) out.best_row = i;
  out.table = render_sweep(out);
  return out;
}

inline nlohmann::ordered_json sweep_row_to_json(SweepAxis axis, const SweepRow& r) {
  nlohmann::ordered_json j;
  j["axis"] = sweep_axis_name(axis);
  j["value"] = r.value;
  j["method"] = r.method;
  j["initial_loss"] = r.initial_loss;
  j["final_train_loss"] = r.final_train_loss;
  j["finite"] = r.finite;
  j["val_f1"] = r.val_f1;
  j["test"] = metrics_to_json(r.test);
  return j;
}

}  // namespace mulvuln

#endif  // MULVULN_TRAINER_HPP
