#ifndef MULVULN_COMMENTS_HPP
#define MULVULN_COMMENTS_HPP

// Single-pass comment removal. Two lexer families share one code/string/
// comment state machine: C-style (C, C++, C#, Go, Java, JavaScript) and
// Python. String literal bytes are always copied through unchanged.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mulvuln/corpus.hpp"

namespace mulvuln {

struct StripDiagnostics {
  std::vector<std::string> warnings;
};

namespace detail {

inline void keep_newlines(std::string& out, std::string_view removed) {
  bool any = false;
  for (char ch : removed)
    if (ch == '\n') {
      out.push_back('\n');
      any = true;
    }
  // A removed inline block comment still separates its neighbours.
  if (!any) out.push_back(' ');
}

// Copies a quoted literal starting at `i` (the opening quote) into `out` and
// returns the index one past its end. Backslash escapes are honoured unless
// `raw` is set; `doubled_quote_escape` handles C# verbatim strings.
inline std::size_t copy_quoted(std::string_view code, std::size_t i, char quote, std::string& out,
                               bool raw = false, bool doubled_quote_escape = false,
                               bool stop_at_newline = false) {
  out.push_back(code[i++]);
  while (i < code.size()) {
    const char ch = code[i];
    if (!raw && ch == '\\' && i + 1 < code.size()) {
      out.push_back(ch);
      out.push_back(code[i + 1]);
      i += 2;
      continue;
    }
    if (ch == quote) {
      if (doubled_quote_escape && i + 1 < code.size() && code[i + 1] == quote) {
        out.append(2, quote);
        i += 2;
        continue;
      }
      out.push_back(ch);
      return i + 1;
    }
    if (stop_at_newline && ch == '\n') return i;
    out.push_back(ch);
    ++i;
  }
  return i;
}

inline std::string strip_c_family(std::string_view code, Language lang, StripDiagnostics* diag) {
  std::string out;
  out.reserve(code.size());
  std::size_t i = 0;
  const bool backtick = lang == Language::GO || lang == Language::JAVASCRIPT;
  while (i < code.size()) {
    const char ch = code[i];
    const char next = i + 1 < code.size() ? code[i + 1] : '\0';
    if (ch == '/' && next == '/') {
      while (i < code.size() && code[i] != '\n') ++i;
      continue;
    }
    if (ch == '/' && next == '*') {
      const std::size_t close = code.find("*/", i + 2);
      if (close == std::string_view::npos) {
        if (diag) diag->warnings.push_back("unterminated block comment at offset " + std::to_string(i));
        keep_newlines(out, code.substr(i));
        return out;
      }
      keep_newlines(out, code.substr(i, close + 2 - i));
      i = close + 2;
      continue;
    }
    if (lang == Language::CPP && ch == 'R' && next == '"' &&
        (i == 0 || !(std::isalnum(static_cast<unsigned char>(code[i - 1])) || code[i - 1] == '_'))) {
      // Raw string R"delim( ... )delim"
      const std::size_t open = code.find('(', i + 2);
      if (open != std::string_view::npos && open - (i + 2) <= 16) {
        const std::string terminator = ")" + std::string(code.substr(i + 2, open - (i + 2))) + "\"";
        const std::size_t close = code.find(terminator, open + 1);
        const std::size_t end = close == std::string_view::npos ? code.size() : close + terminator.size();
        out.append(code.substr(i, end - i));
        i = end;
        continue;
      }
    }
    if (lang == Language::CSHARP && ch == '@' && next == '"') {
      out.push_back('@');
      i = copy_quoted(code, i + 1, '"', out, /*raw=*/true, /*doubled_quote_escape=*/true);
      continue;
    }
    if (ch == '"' || ch == '\'') {
      i = copy_quoted(code, i, ch, out, false, false, /*stop_at_newline=*/true);
      continue;
    }
    if (backtick && ch == '`') {
      i = copy_quoted(code, i, '`', out, /*raw=*/lang == Language::GO);
      continue;
    }
    out.push_back(ch);
    ++i;
  }
  return out;
}

inline bool is_string_prefix(std::string_view p) {
  if (p.empty() || p.size() > 2) return false;
  for (char c : p) {
    const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l != 'r' && l != 'b' && l != 'u' && l != 'f') return false;
  }
  return true;
}

inline std::string strip_python(std::string_view code, StripDiagnostics* diag) {
  std::string out;
  out.reserve(code.size());
  std::size_t i = 0;
  int depth = 0;                 // open brackets
  bool line_start = true;        // only whitespace seen on this logical line
  bool continuation = false;     // previous physical line ended with a backslash
  while (i < code.size()) {
    const char ch = code[i];
    if (ch == '#') {
      while (i < code.size() && code[i] != '\n') ++i;
      continue;
    }
    if (ch == '\n') {
      out.push_back(ch);
      ++i;
      if (depth == 0 && !continuation) line_start = true;
      continuation = false;
      continue;
    }
    if (ch == '\\' && i + 1 < code.size() && code[i + 1] == '\n') {
      out.append("\\\n");
      i += 2;
      continuation = false;  // the joined line continues the same statement
      line_start = false;
      continue;
    }
    // String literal, possibly with a prefix such as r, b, f, rb.
    std::size_t q = i;
    while (q < code.size() && q - i < 2 && std::isalpha(static_cast<unsigned char>(code[q]))) ++q;
    const bool prefixed = q > i && q < code.size() && (code[q] == '"' || code[q] == '\'') &&
                          is_string_prefix(code.substr(i, q - i)) &&
                          (i == 0 || !(std::isalnum(static_cast<unsigned char>(code[i - 1])) || code[i - 1] == '_'));
    if (ch == '"' || ch == '\'' || prefixed) {
      const std::size_t quote_pos = prefixed ? q : i;
      const char quote = code[quote_pos];
      const std::string_view prefix = code.substr(i, quote_pos - i);
      bool raw = false;
      for (char c : prefix) raw = raw || c == 'r' || c == 'R';
      const bool triple = code.substr(quote_pos, 3) == std::string_view(std::string(3, quote));
      if (triple) {
        const std::string delim(3, quote);
        std::size_t j = quote_pos + 3;
        std::size_t end = std::string_view::npos;
        while (j < code.size()) {
          if (!raw && code[j] == '\\') {
            j += 2;
            continue;
          }
          if (code.compare(j, 3, delim) == 0) {
            end = j + 3;
            break;
          }
          ++j;
        }
        const bool unterminated = end == std::string_view::npos;
        if (unterminated) {
          end = code.size();
          if (diag) diag->warnings.push_back("unterminated triple-quoted string at offset " + std::to_string(i));
        }
        // A docstring is a triple-quoted string forming a whole expression
        // statement: nothing but whitespace or a comment follows on its line.
        bool bare_statement = line_start && depth == 0;
        if (bare_statement) {
          std::size_t k = end;
          while (k < code.size() && (code[k] == ' ' || code[k] == '\t' || code[k] == '\r')) ++k;
          bare_statement = k >= code.size() || code[k] == '\n' || code[k] == '#';
        }
        if (bare_statement) {
          for (std::size_t k = i; k < end; ++k)
            if (code[k] == '\n') out.push_back('\n');
        } else {
          out.append(code.substr(i, end - i));
        }
        i = end;
        line_start = false;
        continue;
      }
      out.append(prefix);
      i = copy_quoted(code, quote_pos, quote, out, raw, false, /*stop_at_newline=*/true);
      line_start = false;
      continue;
    }
    if (ch == '(' || ch == '[' || ch == '{') ++depth;
    if ((ch == ')' || ch == ']' || ch == '}') && depth > 0) --depth;
    if (ch != ' ' && ch != '\t' && ch != '\r' && ch != '\f') line_start = false;
    out.push_back(ch);
    ++i;
  }
  return out;
}

}  // namespace detail

// Removes comments (and Python docstrings) while preserving string literals
// and the line structure of the remaining code. An unterminated block comment
// swallows the rest of the input and records a warning in `diag`.
inline std::string strip_comments(std::string_view code, Language lang, StripDiagnostics* diag = nullptr) {
  if (lang == Language::PYTHON) return detail::strip_python(code, diag);
  return detail::strip_c_family(code, lang, diag);
}

}  // namespace mulvuln

#endif  // MULVULN_COMMENTS_HPP
