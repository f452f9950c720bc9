// mulvuln command-line front end.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mulvuln/checkpoint.hpp"
#include "mulvuln/config.hpp"
#include "mulvuln/corpus.hpp"
#include "mulvuln/eval.hpp"
#include "mulvuln/preprocess.hpp"
#include "mulvuln/report.hpp"
#include "mulvuln/tokenizer.hpp"
#include "mulvuln/trainer.hpp"

namespace fs = std::filesystem;
using namespace mulvuln;

namespace {

// Flag values layered over the config file.
struct Overrides {
  std::string config;
  std::string data;
  std::string vocab;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> lp;
  std::optional<double> lambda;
  std::optional<std::size_t> topk;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::vector<std::string> set;
};

void add_common(CLI::App* app, Overrides& o, bool model_flags) {
  app->add_option("--config", o.config, "key=value configuration file");
  app->add_option("--data", o.data, "corpus file or preprocessed directory");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--set", o.set, "extra key=value override (repeatable)");
  if (!model_flags) return;
  app->add_option("--vocab", o.vocab, "vocabulary file");
  app->add_option("--mode", o.mode, "pool_query | pool_masked | backbone_only");
  app->add_option("--lp", o.lp, "parameter length L_p");
  app->add_option("--lambda", o.lambda, "surrogate weight");
  app->add_option("--topk", o.topk, "number of selected matrices K");
  app->add_option("--epochs", o.epochs, "training epochs");
  app->add_option("--lr", o.lr, "learning rate");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  if (!o.data.empty()) c.data = o.data;
  if (!o.vocab.empty()) c.vocab = o.vocab;
  if (!o.out.empty()) c.out = o.out;
  if (o.seed) c.train.seed = *o.seed;
  if (o.mode) c.model.mode = parse_pool_mode(*o.mode);
  if (o.lp) c.model.prompt_length = *o.lp;
  if (o.lambda) c.model.lambda = *o.lambda;
  if (o.topk) c.model.top_k = *o.topk;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.lr) c.train.adam.lr = *o.lr;
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate(c);
  return c;
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing required setting: ") + what);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<CodeSample> flatten(const DatasetSplit& s) {
  std::vector<CodeSample> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  return all;
}

// A directory holding train/val/test.jsonl, or a single record file that is
// split with the configured ratios (pre-assigned splits pass through).
DatasetSplit load_split(const RunConfig& c) {
  require(c.data, "data");
  const fs::path p = resolve_data_path(c.data);
  if (fs::is_directory(p)) {
    DatasetSplit s;
    for (auto [name, dest] : {std::pair{"train.jsonl", &s.train}, {"val.jsonl", &s.val}, {"test.jsonl", &s.test}})
      if (fs::exists(p / name)) *dest = load_records((p / name).string());
    if (s.train.empty()) throw DataError("no training records under '" + p.string() + "'");
    return s;
  }
  return split_dataset(load_records(p.string()), c.ratios, c.seed());
}

std::shared_ptr<const Vocabulary> obtain_vocab(const RunConfig& c, const DatasetSplit& split) {
  if (!c.vocab.empty()) {
    const std::string path = resolve_data_path(c.vocab);
    return std::make_shared<const Vocabulary>(c.external_vocab ? load_external_vocab(path) : load_vocab(path));
  }
  return std::make_shared<const Vocabulary>(build_vocab(split.train, c.vocab_size));
}

MulVulnModel make_model(RunConfig& c, std::shared_ptr<const Vocabulary> vocab) {
  c.model.vocab_size = vocab->size();
  MulVulnModel m = MulVulnModel::init_random(c.model, vocab, c.seed());
  if (!c.assignment.empty()) {
    m.assignment = LanguageAssignment::parse(c.assignment);
    m.assignment.validate(c.model.pool_size);
  }
  if (!c.backbone.empty()) load_backbone(resolve_data_path(c.backbone), m);
  return m;
}

TrainConfig train_config(const RunConfig& c, const std::string& dir) {
  TrainConfig t = c.train;
  t.run_dir = dir;
  RunConfig snapshot = c;
  snapshot.out = dir;
  t.config_snapshot = to_text(snapshot);
  t.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  return t;
}

// Loads best.ckpt from a run directory along with its vocabulary and config.
MulVulnModel load_run_model(const fs::path& dir, RunConfig& c) {
  if (!fs::exists(dir / "best.ckpt")) throw DataError("no best.ckpt under '" + dir.string() + "'");
  auto vocab = std::make_shared<const Vocabulary>(load_vocab((dir / "vocab.txt").string()));
  return load_checkpoint((dir / "best.ckpt").string(), vocab).model;
}

int cmd_synth(const Overrides& o, std::size_t n, double rate) {
  RunConfig c = resolve(o);
  require(c.out, "out");
  fs::create_directories(c.out);
  const auto samples = generate_synthetic(n, rate, c.seed());
  save_records((fs::path(c.out) / "corpus.jsonl").string(), samples);
  std::cout << "wrote " << samples.size() << " samples to " << (fs::path(c.out) / "corpus.jsonl").string() << "\n";
  return 0;
}

int cmd_preprocess(const Overrides& o) {
  RunConfig c = resolve(o);
  require(c.data, "data");
  require(c.out, "out");
  auto samples = load_records(resolve_data_path(c.data));
  std::vector<CodeSample> stripped = samples;
  for (auto& s : stripped) s.code = strip_comments(s.code, s.language);
  // Atom-level lengths do not depend on which atoms are in the vocabulary.
  const Vocabulary vocab = c.vocab.empty() ? build_vocab(stripped, std::max<std::size_t>(c.vocab_size, 8))
                                           : (c.external_vocab ? load_external_vocab(resolve_data_path(c.vocab))
                                                               : load_vocab(resolve_data_path(c.vocab)));
  PreprocessOptions opt;
  opt.max_tokens = c.model.max_tokens;
  opt.ratios = c.ratios;
  opt.seed = c.seed();
  const PreprocessResult r = preprocess(std::move(samples), vocab, opt);
  const fs::path out(c.out);
  fs::create_directories(out);
  save_records((out / "train.jsonl").string(), r.split.train);
  save_records((out / "val.jsonl").string(), r.split.val);
  save_records((out / "test.jsonl").string(), r.split.test);
  const CorpusStats st = stats(r.split);
  write_text(out / "stats.txt", render_stats_table(st));
  write_text(out / "stats.json", stats_to_json(st).dump(2) + "\n");
  std::string log;
  for (const auto& w : r.warnings) log += "warning: " + w + "\n";
  for (const auto& s : r.dropped_length) log += "dropped (length): " + s.id + "\n";
  for (const auto& s : r.dropped_empty) log += "dropped (empty): " + s.id + "\n";
  write_text(out / "preprocess.log", log);
  std::cout << render_stats_table(st);
  std::cout << "dropped " << r.dropped_length.size() << " over " << opt.max_tokens << " tokens, "
            << r.dropped_empty.size() << " empty\n";
  return 0;
}

int cmd_build_vocab(const Overrides& o) {
  RunConfig c = resolve(o);
  require(c.out, "out");
  const DatasetSplit split = load_split(c);
  const Vocabulary v = build_vocab(split.train, c.vocab_size);
  fs::create_directories(c.out);
  save_vocab((fs::path(c.out) / "vocab.txt").string(), v);
  std::cout << "vocabulary of " << v.size() << " entries written to " << (fs::path(c.out) / "vocab.txt").string()
            << "\n";
  return 0;
}

int cmd_train(const Overrides& o) {
  RunConfig c = resolve(o);
  require(c.out, "out");
  const DatasetSplit split = load_split(c);
  auto vocab = obtain_vocab(c, split);
  MulVulnModel model = make_model(c, vocab);
  const TrainOutcome res = train(std::move(model), split, train_config(c, c.out));
  std::cout << "best epoch " << res.history.best_epoch << " (validation F1 " << percent(res.history.best_val_f1)
            << ")\n";
  std::cout << render_run_report(c.out);
  return 0;
}

int cmd_eval(const Overrides& o) {
  RunConfig c = resolve(o);
  require(c.out, "out");
  const fs::path dir(c.out);
  RunConfig run = fs::exists(dir / "config.txt") ? load_config((dir / "config.txt").string()) : c;
  if (!o.data.empty()) run.data = o.data;
  const MulVulnModel model = load_run_model(dir, run);
  const DatasetSplit split = load_split(run);
  const auto& samples = split.test.empty() ? split.val : split.test;
  const EvalResult ev = evaluate(model, samples);
  std::string text = render_metrics_table({{"MULVULN", ev.overall}}) + "\n" + render_breakdown(ev.by_language) +
                     "\n" + render_breakdown(ev.by_cwe);
  write_text(dir / "eval.txt", text);
  nlohmann::ordered_json j;
  j["split"] = split.test.empty() ? "val" : "test";
  j["overall"] = metrics_to_json(ev.overall);
  write_text(dir / "eval.jsonl", j.dump() + "\n" + breakdown_to_jsonl(ev.by_language) + breakdown_to_jsonl(ev.by_cwe));
  std::cout << text;
  return 0;
}

int cmd_sweep(const Overrides& o, const std::string& axis_name, const std::vector<std::string>& values) {
  RunConfig c = resolve(o);
  require(c.out, "out");
  const SweepAxis axis = parse_sweep_axis(axis_name);
  const DatasetSplit split = load_split(c);
  auto vocab = obtain_vocab(c, split);
  c.model.vocab_size = vocab->size();
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "config.txt", to_text(c));
  TrainConfig t = train_config(c, c.out);
  const SweepResult r = sweep(split, c.model, t, axis, vocab, values);
  std::string jl;
  for (const auto& row : r.rows) jl += sweep_row_to_json(axis, row).dump() + "\n";
  write_text(fs::path(c.out) / "sweep.jsonl", jl);
  write_text(fs::path(c.out) / "sweep.txt", r.table);
  std::cout << r.table;
  if (axis == SweepAxis::Lambda) std::cout << "selected lambda " << r.rows[r.best_row].value << " (validation F1)\n";
  return 0;
}

int cmd_export(const Overrides& o, const std::string& which) {
  RunConfig c = resolve(o);
  require(c.out, "out");
  const fs::path dir(c.out);
  RunConfig run = fs::exists(dir / "config.txt") ? load_config((dir / "config.txt").string()) : c;
  if (!o.data.empty()) run.data = o.data;
  const MulVulnModel model = load_run_model(dir, run);
  const DatasetSplit split = load_split(run);
  const auto& samples = which == "train" ? split.train : which == "val" ? split.val : which == "test" ? split.test
                                                                                                     : flatten(split);
  const auto rows = export_embeddings(model, samples, (dir / "embeddings.tsv").string());
  std::cout << "wrote " << rows.size() << " rows to " << (dir / "embeddings.tsv").string() << "\n";
  return 0;
}

int cmd_report(const Overrides& o) {
  RunConfig c = resolve(o);
  require(c.out, "out");
  const std::string text = render_run_report(c.out);
  write_text(fs::path(c.out) / "report.txt", text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mulvuln: multilingual vulnerability detection with a language-specific parameter pool"};
  app.require_subcommand(1);

  Overrides o;
  std::size_t n = 100;
  double rate = 0.5;
  std::string axis;
  std::vector<std::string> values;
  std::string which = "test";

  auto* synth = app.add_subcommand("synth", "generate a synthetic multilingual corpus");
  add_common(synth, o, false);
  synth->add_option("--n", n, "samples per language");
  synth->add_option("--vuln-rate", rate, "fraction of vulnerable samples");

  auto* pre = app.add_subcommand("preprocess", "strip comments, filter by length, split");
  add_common(pre, o, true);
  auto* bv = app.add_subcommand("build-vocab", "build a vocabulary from the training split");
  add_common(bv, o, true);
  auto* tr = app.add_subcommand("train", "train a model and write a run directory");
  add_common(tr, o, true);
  auto* ev = app.add_subcommand("eval", "evaluate best.ckpt of a run directory");
  add_common(ev, o, true);
  auto* sw = app.add_subcommand("sweep", "ablation over one axis");
  add_common(sw, o, true);
  sw->add_option("--axis", axis, "lambda | lp | topk | mpl | mode")->required();
  sw->add_option("--values", values, "axis values (defaults per axis)");
  auto* ex = app.add_subcommand("export-embeddings", "write query and key vectors as TSV");
  add_common(ex, o, true);
  ex->add_option("--split", which, "train | val | test | all");
  auto* rep = app.add_subcommand("report", "render tables from stored run records");
  add_common(rep, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(o, n, rate);
    if (*pre) return cmd_preprocess(o);
    if (*bv) return cmd_build_vocab(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*sw) return cmd_sweep(o, axis, values);
    if (*ex) return cmd_export(o, which);
    if (*rep) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
