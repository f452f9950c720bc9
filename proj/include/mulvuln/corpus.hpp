#ifndef MULVULN_CORPUS_HPP
#define MULVULN_CORPUS_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mulvuln/errors.hpp"

namespace mulvuln {

enum class Language : std::uint8_t { C, CPP, CSHARP, GO, JAVA, JAVASCRIPT, PYTHON };

inline constexpr std::size_t kNumLanguages = 7;
inline constexpr std::array<Language, kNumLanguages> kAllLanguages = {
    Language::C,    Language::CPP,        Language::CSHARP, Language::GO,
    Language::JAVA, Language::JAVASCRIPT, Language::PYTHON};

inline std::size_t language_index(Language l) { return static_cast<std::size_t>(l); }

// Canonical record tag.
inline std::string_view language_tag(Language l) {
  static constexpr std::array<std::string_view, kNumLanguages> tags = {
      "C", "CPP", "CSHARP", "GO", "JAVA", "JAVASCRIPT", "PYTHON"};
  return tags[language_index(l)];
}

// Human-facing name used in report tables.
inline std::string_view language_display(Language l) {
  static constexpr std::array<std::string_view, kNumLanguages> names = {
      "C", "C++", "C#", "Go", "Java", "JavaScript", "Python"};
  return names[language_index(l)];
}

inline std::optional<Language> try_parse_language(std::string_view text) {
  std::string up;
  for (char ch : text) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  if (up == "C++") up = "CPP";
  if (up == "C#") up = "CSHARP";
  for (Language l : kAllLanguages)
    if (language_tag(l) == up) return l;
  return std::nullopt;
}

inline Language parse_language(std::string_view text) {
  if (auto l = try_parse_language(text)) return *l;
  throw DataError("unknown language tag '" + std::string(text) + "'");
}

enum class SplitName : std::uint8_t { Train, Val, Test };

inline std::string_view split_tag(SplitName s) {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Val: return "val";
    case SplitName::Test: return "test";
  }
  return "train";
}

inline SplitName parse_split(std::string_view text) {
  if (text == "train") return SplitName::Train;
  if (text == "val" || text == "valid" || text == "validation") return SplitName::Val;
  if (text == "test") return SplitName::Test;
  throw DataError("unknown split '" + std::string(text) + "'");
}

struct CodeSample {
  std::string id;
  Language language = Language::C;
  std::string code;
  int label = 0;  // 1 = vulnerable
  std::optional<std::string> cwe;
  std::optional<std::string> cve;
  std::optional<SplitName> split;

  bool operator==(const CodeSample&) const = default;
};

struct DatasetSplit {
  std::vector<CodeSample> train;
  std::vector<CodeSample> val;
  std::vector<CodeSample> test;
};

// ---------------------------------------------------------------------------
// Line-delimited record I/O

inline CodeSample parse_record(std::string_view line, std::size_t line_number) {
  auto fail = [&](const std::string& why) -> DataError {
    return DataError("line " + std::to_string(line_number) + ": " + why);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw fail("record is not an object");
  for (const char* key : {"id", "language", "code", "label"})
    if (!j.contains(key)) throw fail(std::string("missing field '") + key + "'");
  CodeSample s;
  try {
    s.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    s.language = parse_language(j.at("language").get<std::string>());
    s.code = j.at("code").get<std::string>();
    const auto& lab = j.at("label");
    if (lab.is_boolean()) {
      s.label = lab.get<bool>() ? 1 : 0;
    } else if (lab.is_number_integer()) {
      s.label = lab.get<int>();
    } else {
      throw fail("label must be 0 or 1");
    }
    if (s.label != 0 && s.label != 1) throw fail("label must be 0 or 1, got " + std::to_string(s.label));
    if (j.contains("cwe") && j["cwe"].is_string()) s.cwe = j["cwe"].get<std::string>();
    if (j.contains("cve") && j["cve"].is_string()) s.cve = j["cve"].get<std::string>();
    if (j.contains("split") && j["split"].is_string()) s.split = parse_split(j["split"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad field type: ") + e.what());
  } catch (const DataError& e) {
    const std::string what = e.what();
    if (what.rfind("line ", 0) == 0) throw;
    throw fail(what);
  }
  return s;
}

inline std::string format_record(const CodeSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["language"] = language_tag(s.language);
  j["code"] = s.code;
  j["label"] = s.label;
  if (s.cwe) j["cwe"] = *s.cwe;
  if (s.cve) j["cve"] = *s.cve;
  if (s.split) j["split"] = split_tag(*s.split);
  return j.dump();
}

inline std::vector<CodeSample> read_records(std::istream& in) {
  std::vector<CodeSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_record(line, n));
  }
  return out;
}

inline std::vector<CodeSample> load_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open records file '" + path + "'");
  return read_records(in);
}

inline void write_records(std::ostream& out, const std::vector<CodeSample>& samples) {
  for (const auto& s : samples) out << format_record(s) << '\n';
}

inline void save_records(const std::string& path, const std::vector<CodeSample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write records file '" + path + "'");
  write_records(out, samples);
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

namespace detail {

// Orders items so that every prefix holds each stratum in proportion to its
// size (within one item): item i of a stratum of size n sits at (i + 0.5) / n.
inline std::vector<std::size_t> interleave_strata(const std::vector<std::vector<std::size_t>>& strata) {
  struct Slot {
    double pos;
    std::size_t stratum;
    std::size_t item;
  };
  std::vector<Slot> slots;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const double n = static_cast<double>(strata[s].size());
    for (std::size_t i = 0; i < strata[s].size(); ++i)
      slots.push_back({(static_cast<double>(i) + 0.5) / n, s, strata[s][i]});
  }
  std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    if (a.pos != b.pos) return a.pos < b.pos;
    return a.stratum < b.stratum;
  });
  std::vector<std::size_t> out;
  out.reserve(slots.size());
  for (const auto& s : slots) out.push_back(s.item);
  return out;
}

}  // namespace detail

// Partitions samples into train/val/test. Pre-assigned `split` fields are
// respected as-is; otherwise a seeded shuffle stratified by language and label
// is cut at largest-remainder targets.
inline DatasetSplit split_dataset(const std::vector<CodeSample>& samples, SplitRatios ratios = {},
                                  std::uint64_t seed = 0) {
  const std::size_t assigned = static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const CodeSample& s) { return s.split.has_value(); }));
  DatasetSplit out;
  if (!samples.empty() && assigned == samples.size()) {
    for (const auto& s : samples) {
      switch (*s.split) {
        case SplitName::Train: out.train.push_back(s); break;
        case SplitName::Val: out.val.push_back(s); break;
        case SplitName::Test: out.test.push_back(s); break;
      }
    }
    return out;
  }
  if (assigned != 0) throw DataError("records mix pre-assigned and unassigned splits");
  const double total_ratio = ratios.train + ratios.val + ratios.test;
  if (std::abs(total_ratio - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1, got " + std::to_string(total_ratio));
  }

  // Strata keyed by language, then label; each shuffled with its own stream.
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> per_language;
  for (Language l : kAllLanguages) {
    std::vector<std::vector<std::size_t>> by_label(2);
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].language == l) by_label[static_cast<std::size_t>(samples[i].label)].push_back(i);
    for (auto& group : by_label) std::shuffle(group.begin(), group.end(), rng);
    auto merged = detail::interleave_strata(by_label);
    if (!merged.empty()) per_language.push_back(std::move(merged));
  }
  const auto order = detail::interleave_strata(per_language);

  const std::size_t n = order.size();
  const std::array<double, 3> exact = {ratios.train * static_cast<double>(n),
                                       ratios.val * static_cast<double>(n),
                                       ratios.test * static_cast<double>(n)};
  std::array<std::size_t, 3> counts{};
  std::size_t used = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    counts[k] = static_cast<std::size_t>(std::floor(exact[k] + 1e-9));
    used += counts[k];
  }
  std::array<std::size_t, 3> by_remainder = {0, 1, 2};
  std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](std::size_t a, std::size_t b) {
    return (exact[a] - std::floor(exact[a] + 1e-9)) > (exact[b] - std::floor(exact[b] + 1e-9));
  });
  for (std::size_t k = 0; used < n; k = (k + 1) % 3, ++used) ++counts[by_remainder[k]];

  for (std::size_t pos = 0; pos < n; ++pos) {
    CodeSample s = samples[order[pos]];
    if (pos < counts[0]) {
      s.split = SplitName::Train;
      out.train.push_back(std::move(s));
    } else if (pos < counts[0] + counts[1]) {
      s.split = SplitName::Val;
      out.val.push_back(std::move(s));
    } else {
      s.split = SplitName::Test;
      out.test.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct LanguageCounts {
  std::size_t train = 0, val = 0, test = 0;
  std::size_t vulnerable = 0, non_vulnerable = 0;
  std::size_t total() const { return train + val + test; }
  bool operator==(const LanguageCounts&) const = default;
};

struct CorpusStats {
  std::array<LanguageCounts, kNumLanguages> per_language{};
  LanguageCounts totals;

  const LanguageCounts& of(Language l) const { return per_language[language_index(l)]; }
};

inline CorpusStats stats(const DatasetSplit& split) {
  CorpusStats st;
  auto tally = [&](const std::vector<CodeSample>& part, std::size_t LanguageCounts::*field) {
    for (const auto& s : part) {
      auto& lc = st.per_language[language_index(s.language)];
      ++(lc.*field);
      ++(st.totals.*field);
      if (s.label == 1) {
        ++lc.vulnerable;
        ++st.totals.vulnerable;
      } else {
        ++lc.non_vulnerable;
        ++st.totals.non_vulnerable;
      }
    }
  };
  tally(split.train, &LanguageCounts::train);
  tally(split.val, &LanguageCounts::val);
  tally(split.test, &LanguageCounts::test);
  return st;
}

namespace detail {
inline std::string with_commas(std::size_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return out;
}
}  // namespace detail

// Languages sorted ascending by total sample count, then a Total row.
inline std::string render_stats_table(const CorpusStats& st) {
  std::vector<Language> order(kAllLanguages.begin(), kAllLanguages.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](Language a, Language b) { return st.of(a).total() < st.of(b).total(); });
  std::ostringstream os;
  auto line = [&](std::string_view name, const LanguageCounts& c) {
    os << std::left << std::setw(12) << name << std::right;
    for (std::size_t v : {c.train, c.val, c.test, c.vulnerable, c.non_vulnerable, c.total()})
      os << std::setw(12) << detail::with_commas(v);
    os << '\n';
  };
  os << std::left << std::setw(12) << "Languages" << std::right;
  for (const char* h : {"Training", "Validation", "Test", "Vul", "Non-Vul", "Total"}) os << std::setw(12) << h;
  os << '\n' << std::string(84, '-') << '\n';
  for (Language l : order) line(language_display(l), st.of(l));
  os << std::string(84, '-') << '\n';
  line("Total", st.totals);
  return os.str();
}

inline nlohmann::ordered_json stats_to_json(const CorpusStats& st) {
  auto counts = [](const LanguageCounts& c) {
    nlohmann::ordered_json j;
    j["train"] = c.train;
    j["val"] = c.val;
    j["test"] = c.test;
    j["vulnerable"] = c.vulnerable;
    j["non_vulnerable"] = c.non_vulnerable;
    j["total"] = c.total();
    return j;
  };
  nlohmann::ordered_json j;
  for (Language l : kAllLanguages) j["languages"][std::string(language_tag(l))] = counts(st.of(l));
  j["totals"] = counts(st.totals);
  return j;
}

// ---------------------------------------------------------------------------
// Synthetic desk-scale corpus

// One planted vulnerability pattern and its patched counterpart. `sink` is the
// identifier whose presence marks the vulnerable variant.
struct SinkPattern {
  std::string_view sink;
  std::string_view vulnerable;
  std::string_view patched;
  std::string_view cwe;
};

inline const std::vector<SinkPattern>& sink_patterns(Language l) {
  // Placeholders: $B buffer, $A input, $N size, $R result, $C connection.
  static const std::array<std::vector<SinkPattern>, kNumLanguages> table = {{
      // C
      {{"strcpy", "strcpy($B, $A);", "strncpy($B, $A, sizeof($B) - 1);", "CWE-787"},
       {"sprintf", "sprintf($B, \"%s\", $A);", "snprintf($B, sizeof($B), \"%s\", $A);", "CWE-787"},
       {"gets", "gets($B);", "fgets($B, sizeof($B), stdin);", "CWE-20"}},
      // C++
      {{"strcpy", "strcpy($B, $A.c_str());", "$A.copy($B, sizeof($B) - 1);", "CWE-787"},
       {"memcpy", "std::memcpy($B, $A.data(), $A.size());",
        "std::copy_n($A.data(), std::min($A.size(), sizeof($B)), $B);", "CWE-125"}},
      // C#
      {{"SqlCommand",
        "var $R = new SqlCommand(\"SELECT * FROM users WHERE name = '\" + $A + \"'\", $C);",
        "var $R = BuildQuery(\"SELECT * FROM users WHERE name = @name\", $C); $R.Parameters.AddWithValue(\"@name\", $A);",
        "CWE-89"},
       {"Write", "Response.Write($A);", "Response.Output(HttpUtility.HtmlEncode($A));", "CWE-79"}},
      // Go
      {{"Command", "$R := exec.Command(\"sh\", \"-c\", $A)", "$R := runner.Lookup(filepath.Base($A))", "CWE-78"},
       {"HTML", "$R := template.HTML($A)", "$R := template.HTMLEscapeString($A)", "CWE-79"}},
      // Java
      {{"exec", "Runtime.getRuntime().exec($A);", "new ProcessBuilder(\"ls\", $A).start();", "CWE-78"},
       {"executeQuery", "$C.createStatement().executeQuery(\"SELECT * FROM t WHERE id = \" + $A);",
        "PreparedStatement $R = $C.prepareStatement(\"SELECT * FROM t WHERE id = ?\"); $R.setString(1, $A);",
        "CWE-89"},
       {"getCanonicalFile", "File $R = new File(baseDir, $A).getCanonicalFile();",
        "File $R = new File(baseDir, FilenameUtils.getName($A));", "CWE-22"}},
      // JavaScript
      {{"eval", "eval($A);", "JSON.parse($A);", "CWE-94"},
       {"innerHTML", "$R.innerHTML = $A;", "$R.textContent = $A;", "CWE-79"}},
      // Python
      {{"eval", "$R = eval($A)", "$R = ast.literal_eval($A)", "CWE-94"},
       {"system", "os.system($A)", "subprocess.run([\"ls\", $A], check=True)", "CWE-78"},
       {"pickle", "$R = pickle.loads($A)", "$R = json.loads($A)", "CWE-502"}},
  }};
  return table[language_index(l)];
}

namespace detail {

inline std::string substitute(std::string_view tmpl, const std::map<char, std::string>& vars) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '$' && i + 1 < tmpl.size() && vars.count(tmpl[i + 1])) {
      out += vars.at(tmpl[i + 1]);
      ++i;
    } else {
      out.push_back(tmpl[i]);
    }
  }
  return out;
}

template <class Rng>
const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

template <class Rng>
int pick_int(int lo, int hi, Rng& rng) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

template <class Rng>
std::string synth_function(Language lang, bool vulnerable, const SinkPattern& pat, Rng& rng) {
  static const std::vector<std::string> verbs = {"parse", "load", "handle", "read", "build",
                                                 "render", "process", "update", "fetch", "apply"};
  static const std::vector<std::string> nouns = {"Header", "Config", "Request", "Entry", "Token",
                                                 "Record", "Path", "Message", "Field", "Item"};
  static const std::vector<std::string> vars = {"count", "offset", "index", "total", "limit",
                                                "size", "pos", "flags", "depth", "width"};
  static const std::vector<std::string> inputs = {"input", "name", "src", "query", "value", "data", "arg"};
  static const std::vector<std::string> notes = {"validate arguments", "fast path", "legacy behaviour",
                                                 "see issue tracker", "keep in sync", "copy payload"};

  const std::string fn = pick(verbs, rng) + pick(nouns, rng);
  const std::string a = pick(inputs, rng);
  const std::string v1 = pick(vars, rng);
  std::string v2 = pick(vars, rng);
  if (v2 == v1) v2 += "2";
  const std::string note = pick(notes, rng);
  const int n1 = pick_int(1, 64, rng);
  const int n2 = pick_int(1, 16, rng);
  const std::map<char, std::string> sub = {{'B', "buf"}, {'A', a}, {'N', v1}, {'R', "result"}, {'C', "conn"}};
  const std::string stmt = substitute(vulnerable ? pat.vulnerable : pat.patched, sub);
  const bool extra = pick_int(0, 1, rng) == 1;

  std::ostringstream os;
  switch (lang) {
    case Language::C:
      os << "static int " << fn << "(const char *" << a << ", size_t " << v1 << ") {\n"
         << "    char buf[" << n1 * 4 << "];\n"
         << "    int " << v2 << " = " << n2 << "; // " << note << "\n";
      if (extra) os << "    /* " << note << " */\n    if (" << v1 << " > " << n1 << ") { " << v2 << "++; }\n";
      os << "    " << stmt << "\n"
         << "    return " << v2 << ";\n}\n";
      break;
    case Language::CPP:
      os << "int " << fn << "(const std::string& " << a << ", std::size_t " << v1 << ") {\n"
         << "    char buf[" << n1 * 4 << "];\n"
         << "    auto " << v2 << " = static_cast<int>(" << v1 << ") + " << n2 << "; // " << note << "\n";
      if (extra) os << "    for (auto& ch : " << a << ") { " << v2 << " += ch == ':'; }\n";
      os << "    " << stmt << "\n"
         << "    return " << v2 << ";\n}\n";
      break;
    case Language::CSHARP:
      os << "public int " << fn << "(string " << a << ", SqlConnection conn) {\n"
         << "    int " << v2 << " = " << n2 << "; // " << note << "\n";
      if (extra) os << "    if (string.IsNullOrEmpty(" << a << ")) { return -1; }\n";
      os << "    " << stmt << "\n"
         << "    return " << v2 << ";\n}\n";
      break;
    case Language::GO:
      os << "func " << fn << "(" << a << " string, " << v1 << " int) (int, error) {\n"
         << "\t" << v2 << " := " << v1 << " + " << n2 << " // " << note << "\n";
      if (extra) os << "\tif " << a << " == \"\" {\n\t\treturn 0, errors.New(\"empty\")\n\t}\n";
      os << "\t" << stmt << "\n"
         << "\t_ = result\n"
         << "\treturn " << v2 << ", nil\n}\n";
      break;
    case Language::JAVA:
      os << "public int " << fn << "(final String " << a << ", Connection conn) throws Exception {\n"
         << "    int " << v2 << " = " << n2 << "; // " << note << "\n";
      if (extra) os << "    if (" << a << " == null) {\n        throw new IllegalArgumentException(\"" << a << "\");\n    }\n";
      os << "    " << stmt << "\n"
         << "    return " << v2 << ";\n}\n";
      break;
    case Language::JAVASCRIPT:
      os << "function " << fn << "(" << a << ", " << v1 << ") {\n"
         << "  const result = document.getElementById(\"" << fn << "\"); // " << note << "\n"
         << "  let " << v2 << " = " << v1 << " || " << n2 << ";\n";
      if (extra) os << "  const url = \"https://example.com/" << a << "\";\n";
      os << "  " << stmt << "\n"
         << "  return " << v2 << ";\n}\n";
      break;
    case Language::PYTHON:
      os << "def " << fn << "(self, " << a << ", " << v1 << "=" << n2 << "):\n";
      if (extra) os << "    \"\"\"" << note << ".\"\"\"\n";
      os << "    " << v2 << " = " << v1 << " + " << n1 << "  # " << note << "\n"
         << "    " << stmt << "\n"
         << "    return " << v2 << "\n";
      break;
  }
  return os.str();
}

}  // namespace detail

// Emits n_per_language labeled functions for each of the seven languages;
// round(n * vuln_rate) of them per language carry a planted sink.
inline std::vector<CodeSample> generate_synthetic(std::size_t n_per_language, double vuln_rate,
                                                  std::uint64_t seed) {
  if (n_per_language < 2) throw ConfigError("generate_synthetic: n_per_language must be >= 2");
  if (!(vuln_rate > 0.0 && vuln_rate < 1.0)) throw ConfigError("generate_synthetic: vuln_rate must be in (0,1)");
  std::mt19937_64 rng(seed);
  std::vector<CodeSample> out;
  out.reserve(n_per_language * kNumLanguages);
  for (Language lang : kAllLanguages) {
    const auto n_vuln = static_cast<std::size_t>(std::llround(static_cast<double>(n_per_language) * vuln_rate));
    std::vector<int> labels(n_per_language, 0);
    std::fill_n(labels.begin(), std::min(n_vuln, n_per_language), 1);
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto& patterns = sink_patterns(lang);
    std::string prefix(language_tag(lang));
    std::transform(prefix.begin(), prefix.end(), prefix.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    for (std::size_t i = 0; i < n_per_language; ++i) {
      const auto& pat = patterns[static_cast<std::size_t>(detail::pick_int(0, static_cast<int>(patterns.size()) - 1, rng))];
      CodeSample s;
      std::ostringstream id;
      id << prefix << '-' << std::setw(5) << std::setfill('0') << i;
      s.id = id.str();
      s.language = lang;
      s.label = labels[i];
      s.code = detail::synth_function(lang, labels[i] == 1, pat, rng);
      s.cwe = std::string(pat.cwe);
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace mulvuln

#endif  // MULVULN_CORPUS_HPP
