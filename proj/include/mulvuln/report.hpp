#ifndef MULVULN_REPORT_HPP
#define MULVULN_REPORT_HPP

// Renders tables from the line-delimited records a run directory holds:
// history.jsonl, metrics.jsonl and sweep.jsonl.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mulvuln/errors.hpp"
#include "mulvuln/eval.hpp"
#include "mulvuln/trainer.hpp"

namespace mulvuln {

inline std::vector<nlohmann::ordered_json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<nlohmann::ordered_json> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::ordered_json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + " line " + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

inline std::string render_history(const std::vector<EpochRecord>& epochs, std::size_t best_epoch = 0) {
  std::vector<std::vector<std::string>> body;
  for (const auto& e : epochs) {
    char loss[32];
    std::snprintf(loss, sizeof loss, "%.6f", e.train_loss);
    body.push_back({std::to_string(e.epoch) + (e.epoch == best_epoch ? " *" : ""), loss, percent(e.val.recall),
                    percent(e.val.precision), percent(e.val.f1)});
  }
  return render_table({"Epoch", "Train loss", "Val Recall", "Val Precision", "Val F1-score"}, body);
}

// Rebuilds a breakdown from metrics.jsonl group records.
inline BreakdownReport breakdown_from_jsonl(const std::vector<nlohmann::ordered_json>& records, GroupBy by) {
  BreakdownReport b;
  b.by = by;
  const std::string want = by == GroupBy::Language ? "language" : "cwe";
  for (const auto& j : records) {
    if (!j.contains("by") || j["by"] != want) continue;
    GroupMetrics g;
    g.key = j.at("group").get<std::string>();
    g.n_samples = j.at("samples").get<std::size_t>();
    g.n_vulnerable = j.at("vulnerable").get<std::size_t>();
    const auto& m = j.at("metrics");
    g.report = metrics_from_json(m);
    if (j.contains("average")) {
      g.report.recall = m.at("recall").get<double>();
      g.report.precision = m.at("precision").get<double>();
      g.report.f1 = m.at("f1").get<double>();
      b.average = g;
    } else {
      b.groups.push_back(g);
    }
  }
  return b;
}

inline std::string render_sweep_records(const std::vector<nlohmann::ordered_json>& records) {
  if (records.empty()) return "";
  SweepResult r;
  r.axis = parse_sweep_axis(records.front().at("axis").get<std::string>());
  for (const auto& j : records) {
    SweepRow row;
    row.value = j.at("value").get<std::string>();
    row.method = j.at("method").get<std::string>();
    row.test = metrics_from_json(j.at("test"));
    r.rows.push_back(row);
  }
  return render_sweep(r);
}

// Text report for a run (or sweep) directory; sections appear for whichever
// record files exist.
inline std::string render_run_report(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  std::string out;
  bool any = false;
  if (fs::exists(d / "history.jsonl")) {
    const auto epochs = load_history((d / "history.jsonl").string());
    std::size_t best = 0;
    double best_f1 = -1.0;
    for (const auto& e : epochs)
      if (e.val.f1 > best_f1) {
        best_f1 = e.val.f1;
        best = e.epoch;
      }
    out += "Training history (* = selected checkpoint)\n" + render_history(epochs, best) + "\n";
    any = true;
  }
  if (fs::exists(d / "metrics.jsonl")) {
    const auto recs = read_jsonl((d / "metrics.jsonl").string());
    for (const auto& j : recs)
      if (j.contains("overall"))
        out += "Overall (" + j.value("split", std::string("test")) + ")\n" +
               render_metrics_table({{"MULVULN", metrics_from_json(j["overall"])}}) + "\n";
    out += render_breakdown(breakdown_from_jsonl(recs, GroupBy::Language)) + "\n";
    out += render_breakdown(breakdown_from_jsonl(recs, GroupBy::Cwe)) + "\n";
    any = true;
  }
  if (fs::exists(d / "sweep.jsonl")) {
    out += "Ablation\n" + render_sweep_records(read_jsonl((d / "sweep.jsonl").string())) + "\n";
    any = true;
  }
  if (!any) throw DataError("no run records (history.jsonl, metrics.jsonl, sweep.jsonl) under '" + dir + "'");
  return out;
}

}  // namespace mulvuln

#endif  // MULVULN_REPORT_HPP
