#ifndef MULVULN_EVAL_HPP
#define MULVULN_EVAL_HPP

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mulvuln/corpus.hpp"
#include "mulvuln/errors.hpp"
#include "mulvuln/model.hpp"

namespace mulvuln {

// Binary confusion counts and ratios; class 1 (vulnerable) is positive.
struct MetricsReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double recall = 0.0, precision = 0.0, f1 = 0.0;
  bool recall_undefined = false;     // tp + fn == 0
  bool precision_undefined = false;  // tp + fp == 0

  std::size_t total() const { return tp + fp + fn + tn; }
  std::size_t positives() const { return tp + fn; }
};

inline double f1_score(double recall, double precision) {
  return recall + precision > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  MetricsReport r{tp, fp, fn, tn};
  r.recall_undefined = tp + fn == 0;
  r.precision_undefined = tp + fp == 0;
  r.recall = r.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.precision = r.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.f1 = f1_score(r.recall, r.precision);
  return r;
}

inline MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw DataError("compute_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw DataError("compute_metrics: labels must be 0 or 1");
    if (p == 1 && y == 1) ++tp;
    else if (p == 1) ++fp;
    else if (y == 1) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

// ---------------------------------------------------------------------------
// Breakdowns

enum class GroupBy : std::uint8_t { Language, Cwe };

struct GroupMetrics {
  std::string key;
  MetricsReport report;
  std::size_t n_samples = 0;
  std::size_t n_vulnerable = 0;  // ground-truth positives
};

struct BreakdownReport {
  GroupBy by = GroupBy::Language;
  std::vector<GroupMetrics> groups;
  // cwe only: unweighted mean over whichever top-10 identifiers are present.
  std::optional<GroupMetrics> average;
};

inline constexpr std::array<std::string_view, 10> kTopCwes = {"CWE-79",  "CWE-787", "CWE-89", "CWE-78",  "CWE-416",
                                                              "CWE-20",  "CWE-125", "CWE-22", "CWE-352", "CWE-94"};

inline std::string_view cwe_title(std::string_view id) {
  static const std::map<std::string_view, std::string_view> names = {
      {"CWE-79", "Cross-Site Scripting"},  {"CWE-787", "Out-of-Bounds Write"},
      {"CWE-89", "SQL Injection"},         {"CWE-78", "OS Command Injection"},
      {"CWE-416", "Use After Free"},       {"CWE-20", "Improper Input Validation"},
      {"CWE-125", "Out-of-Bounds Read"},   {"CWE-22", "Path Traversal"},
      {"CWE-352", "Cross-Site Request Forgery"}, {"CWE-94", "Code Injection"}};
  auto it = names.find(id);
  return it == names.end() ? std::string_view{} : it->second;
}

// Row order of the per-language table (ascending corpus size).
inline constexpr std::array<Language, kNumLanguages> kLanguageReportOrder = {
    Language::CSHARP, Language::CPP, Language::GO, Language::C, Language::JAVA, Language::PYTHON, Language::JAVASCRIPT};

inline BreakdownReport breakdown(std::span<const int> predictions, std::span<const int> labels,
                                 std::span<const CodeSample> samples, GroupBy by) {
  if (predictions.size() != labels.size() || labels.size() != samples.size())
    throw DataError("breakdown: predictions, labels and samples differ in length");
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::string key;
    if (by == GroupBy::Language) key = language_tag(samples[i].language);
    else key = samples[i].cwe && !samples[i].cwe->empty() ? *samples[i].cwe : "unknown";
    auto& g = groups[key];
    g.first.push_back(predictions[i]);
    g.second.push_back(labels[i]);
  }
  auto make = [](const std::string& key, const std::vector<int>& p, const std::vector<int>& y) {
    GroupMetrics gm;
    gm.key = key;
    gm.report = compute_metrics(p, y);
    gm.n_samples = y.size();
    gm.n_vulnerable = gm.report.positives();
    return gm;
  };
  BreakdownReport out;
  out.by = by;
  if (by == GroupBy::Language) {
    for (Language l : kLanguageReportOrder) {
      auto it = groups.find(std::string(language_tag(l)));
      if (it != groups.end()) out.groups.push_back(make(it->first, it->second.first, it->second.second));
    }
    return out;
  }
  // Top-10 identifiers first in their listed order, then the rest by key, "unknown" last.
  for (std::string_view id : kTopCwes) {
    auto it = groups.find(std::string(id));
    if (it != groups.end()) out.groups.push_back(make(it->first, it->second.first, it->second.second));
  }
  for (const auto& [key, g] : groups) {
    if (key == "unknown" || !cwe_title(key).empty()) continue;
    out.groups.push_back(make(key, g.first, g.second));
  }
  if (auto it = groups.find("unknown"); it != groups.end())
    out.groups.push_back(make(it->first, it->second.first, it->second.second));

  std::size_t n_top = 0;
  GroupMetrics avg;
  avg.key = "Average";
  for (const auto& g : out.groups) {
    if (cwe_title(g.key).empty()) continue;
    ++n_top;
    avg.report.recall += g.report.recall;
    avg.report.precision += g.report.precision;
    avg.report.f1 += g.report.f1;
    avg.report.tp += g.report.tp;
    avg.report.fp += g.report.fp;
    avg.report.fn += g.report.fn;
    avg.report.tn += g.report.tn;
    avg.n_samples += g.n_samples;
    avg.n_vulnerable += g.n_vulnerable;
  }
  if (n_top > 0) {
    avg.report.recall /= static_cast<double>(n_top);
    avg.report.precision /= static_cast<double>(n_top);
    avg.report.f1 /= static_cast<double>(n_top);
    out.average = avg;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

// Aligned plain-text table; column 0 left-aligned, the rest right-aligned.
inline std::string render_table(const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows,
                                const std::vector<std::size_t>& rules_before = {}) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::size_t total = 0;
  for (auto w : width) total += w;
  total += 3 * (width.size() - 1);
  const std::string rule(total, '-');
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < r.size() ? r[c] : "";
      const std::string pad(width[c] - cell.size(), ' ');
      if (c) s += "   ";
      s += c == 0 ? cell + pad : pad + cell;
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = rule + "\n" + line(header) + rule + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::find(rules_before.begin(), rules_before.end(), i) != rules_before.end()) out += rule + "\n";
    out += line(rows[i]);
  }
  return out + rule + "\n";
}

// Methods | Recall | Precision | F1-score
inline std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                                        const std::string& first_column = "Methods") {
  std::vector<std::vector<std::string>> body;
  for (const auto& [name, m] : rows) body.push_back({name, percent(m.recall), percent(m.precision), percent(m.f1)});
  return render_table({first_column, "Recall", "Precision", "F1-score"}, body);
}

inline std::string render_breakdown(const BreakdownReport& b) {
  std::vector<std::vector<std::string>> body;
  if (b.by == GroupBy::Language) {
    for (const auto& g : b.groups) {
      const auto lang = try_parse_language(g.key);
      body.push_back({lang ? std::string(language_display(*lang)) : g.key, percent(g.report.recall),
                      percent(g.report.precision), percent(g.report.f1)});
    }
    return render_table({"Languages", "Recall", "Precision", "F1-score"}, body);
  }
  for (const auto& g : b.groups) {
    const auto title = cwe_title(g.key);
    body.push_back({title.empty() ? g.key : g.key + " (" + std::string(title) + ")", percent(g.report.recall),
                    percent(g.report.f1), std::to_string(g.n_vulnerable), std::to_string(g.n_samples)});
  }
  std::vector<std::size_t> rules;
  if (b.average) {
    rules.push_back(body.size());
    body.push_back({"Average", percent(b.average->report.recall), percent(b.average->report.f1),
                    std::to_string(b.average->n_vulnerable), std::to_string(b.average->n_samples)});
  }
  return render_table({"CWEs", "Recall", "F1-score", "Vul Samples", "Total Samples"}, body, rules);
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["tn"] = m.tn;
  j["recall"] = m.recall;
  j["precision"] = m.precision;
  j["f1"] = m.f1;
  if (m.recall_undefined) j["recall_undefined"] = true;
  if (m.precision_undefined) j["precision_undefined"] = true;
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::ordered_json& j) {
  MetricsReport m = metrics_from_counts(j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                                        j.at("fn").get<std::size_t>(), j.at("tn").get<std::size_t>());
  return m;
}

// One JSON line per group (plus the average row when present).
inline std::string breakdown_to_jsonl(const BreakdownReport& b) {
  std::string out;
  auto emit = [&](const GroupMetrics& g, bool is_average) {
    nlohmann::ordered_json j;
    j["by"] = b.by == GroupBy::Language ? "language" : "cwe";
    j["group"] = g.key;
    if (is_average) j["average"] = "macro";
    j["samples"] = g.n_samples;
    j["vulnerable"] = g.n_vulnerable;
    j["metrics"] = metrics_to_json(g.report);
    if (is_average) {
      j["metrics"]["recall"] = g.report.recall;
      j["metrics"]["precision"] = g.report.precision;
      j["metrics"]["f1"] = g.report.f1;
    }
    out += j.dump() + "\n";
  };
  for (const auto& g : b.groups) emit(g, false);
  if (b.average) emit(*b.average, true);
  return out;
}

// ---------------------------------------------------------------------------
// Query / key export

struct EmbeddingRow {
  std::string kind;   // "query" or "key"
  std::string id;     // sample id, or pool index for keys
  std::string group;  // language tag, or pool index for keys
  std::optional<std::size_t> selected;
  std::vector<double> values;
};

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

// Computes q(X) and the unrestricted top-1 selection for every sample (sorted
// by id), followed by every key. Columns: kind, id, language-or-index,
// selected index ("-" for keys), then D values.
inline std::vector<EmbeddingRow> compute_embeddings(const MulVulnModel& model, std::vector<CodeSample> samples) {
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<EmbeddingRow> rows;
  NoGradGuard guard;
  for (const auto& s : samples) {
    const Tensor x_e = model.embedding.embed(model.tokenize(s));
    const Tensor q = model.compute_query(x_e);
    const Selection sel = select(q.data(), model.keys, 1);
    rows.push_back({"query", s.id, std::string(language_tag(s.language)), sel.i_star(),
                    {q.data().begin(), q.data().end()}});
  }
  for (std::size_t i = 0; i < model.keys.size(); ++i) {
    const auto& k = model.keys.keys[i];
    rows.push_back({"key", std::to_string(i), std::to_string(i), std::nullopt, {k.data().begin(), k.data().end()}});
  }
  return rows;
}

inline std::string format_embeddings(const std::vector<EmbeddingRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.kind + "\t" + r.id + "\t" + r.group + "\t" + (r.selected ? std::to_string(*r.selected) : "-");
    for (double v : r.values) out += "\t" + detail::fmt_double(v);
    out += "\n";
  }
  return out;
}

inline std::vector<EmbeddingRow> export_embeddings(const MulVulnModel& model, const std::vector<CodeSample>& samples,
                                                   const std::string& path) {
  auto rows = compute_embeddings(model, samples);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write embeddings to '" + path + "'");
  out << format_embeddings(rows);
  return rows;
}

// Fraction of samples whose unrestricted top-1 index lies in their own
// language's assigned set.
inline double selection_agreement(const MulVulnModel& model, const std::vector<CodeSample>& samples) {
  if (samples.empty()) return 0.0;
  std::size_t hit = 0;
  NoGradGuard guard;
  for (const auto& s : samples) {
    const Tensor q = model.compute_query(model.embedding.embed(model.tokenize(s)));
    const std::size_t i = select(q.data(), model.keys, 1).i_star();
    const auto& allowed = model.assignment.allowed(s.language);
    if (std::find(allowed.begin(), allowed.end(), i) != allowed.end()) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

struct EvalResult {
  std::vector<Prediction> predictions;
  MetricsReport overall;
  BreakdownReport by_language;
  BreakdownReport by_cwe;
};

inline EvalResult evaluate(const MulVulnModel& model, const std::vector<CodeSample>& samples) {
  EvalResult r;
  r.predictions = model.predict_batch(samples);
  std::vector<int> pred, gold;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pred.push_back(r.predictions[i].label);
    gold.push_back(samples[i].label);
  }
  r.overall = compute_metrics(pred, gold);
  r.by_language = breakdown(pred, gold, samples, GroupBy::Language);
  r.by_cwe = breakdown(pred, gold, samples, GroupBy::Cwe);
  return r;
}

}  // namespace mulvuln

#endif  // MULVULN_EVAL_HPP
