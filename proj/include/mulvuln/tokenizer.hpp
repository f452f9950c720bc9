#ifndef MULVULN_TOKENIZER_HPP
#define MULVULN_TOKENIZER_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mulvuln/corpus.hpp"
#include "mulvuln/errors.hpp"

namespace mulvuln {

inline constexpr std::array<std::string_view, 4> kSpecialTokens = {"[CLS]", "[EOS]", "[PAD]", "[UNK]"};

// Splits source text into atoms: identifiers, numbers, multi-character
// operators, single punctuation bytes and runs of non-ASCII bytes.
inline std::vector<std::string_view> split_atoms(std::string_view text) {
  static constexpr std::array<std::string_view, 26> kOperators = {
      ">>>=", "<<=", ">>=", "===", "!==", "...", "**=", "->", "::", "==", "!=", "<=", ">=",
      "&&",   "||",  "++",  "--",  "+=",  "-=",  "*=",  "/=", "<<", ">>", "=>", ":=", "**"};
  auto ident_char = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (std::isalpha(c) || c == '_' || c == '$') {
      while (j < text.size() && (ident_char(static_cast<unsigned char>(text[j])) || text[j] == '$')) ++j;
    } else if (std::isdigit(c)) {
      while (j < text.size() &&
             (ident_char(static_cast<unsigned char>(text[j])) || text[j] == '.'))
        ++j;
    } else if (c >= 0x80) {
      while (j < text.size() && static_cast<unsigned char>(text[j]) >= 0x80) ++j;
    } else {
      for (std::string_view op : kOperators) {
        if (text.substr(i, op.size()) == op) {
          j = i + op.size();
          break;
        }
      }
    }
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::size_t length() const { return ids.size(); }
};

class Vocabulary {
 public:
  static constexpr std::int32_t kCls = 0, kEos = 1, kPad = 2, kUnk = 3;

  Vocabulary() {
    for (auto s : kSpecialTokens) add(std::string(s));
  }

  // Builds a vocabulary from tokens listed one per line (line number = id).
  // The first four lines must be the special tokens in canonical order.
  static Vocabulary from_lines(const std::vector<std::string>& lines, bool subword = false) {
    if (lines.size() < kSpecialTokens.size()) throw DataError("vocabulary has fewer than 4 entries");
    for (std::size_t i = 0; i < kSpecialTokens.size(); ++i)
      if (lines[i] != kSpecialTokens[i])
        throw DataError("vocabulary line " + std::to_string(i + 1) + " must be " + std::string(kSpecialTokens[i]));
    Vocabulary v;
    v.subword_ = subword;
    for (std::size_t i = kSpecialTokens.size(); i < lines.size(); ++i) {
      if (lines[i].empty()) throw DataError("vocabulary line " + std::to_string(i + 1) + " is empty");
      if (v.contains(lines[i])) throw DataError("duplicate vocabulary token '" + lines[i] + "'");
      v.add(lines[i]);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool subword() const { return subword_; }
  bool contains(std::string_view tok) const { return index_.count(std::string(tok)) != 0; }
  std::int32_t id_of(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                      std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
  }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // 64-bit FNV-1a over the newline-joined token list.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& t : tokens_) {
      for (unsigned char c : t) {
        h ^= c;
        h *= 1099511628211ULL;
      }
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ULL;
    }
    return h;
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_ && subword_ == o.subword_; }

 private:
  void add(std::string tok) {
    index_.emplace(tok, static_cast<std::int32_t>(tokens_.size()));
    tokens_.push_back(std::move(tok));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  bool subword_ = false;
};

// Keeps the max_size - 4 most frequent atoms (ties broken lexicographically).
inline Vocabulary build_vocab(const std::vector<CodeSample>& corpus, std::size_t max_size) {
  if (max_size < 8) throw ConfigError("build_vocab: max_size must be >= 8, got " + std::to_string(max_size));
  if (corpus.empty()) throw ConfigError("build_vocab: corpus is empty");
  std::map<std::string, std::size_t, std::less<>> freq;
  for (const auto& s : corpus)
    for (auto atom : split_atoms(s.code)) {
      auto it = freq.find(atom);
      if (it == freq.end()) freq.emplace(std::string(atom), 1);
      else ++it->second;
    }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> lines(kSpecialTokens.begin(), kSpecialTokens.end());
  for (const auto& [tok, count] : ranked) {
    if (lines.size() >= max_size) break;
    if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), tok) != kSpecialTokens.end()) continue;
    lines.push_back(tok);
  }
  return Vocabulary::from_lines(lines);
}

inline void save_vocab(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary '" + path + "'");
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

inline std::vector<std::string> read_vocab_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline Vocabulary load_vocab(const std::string& path) { return Vocabulary::from_lines(read_vocab_lines(path)); }

// Loads a pretrained subword vocabulary (one piece per line). Special tokens
// are placed first; pieces that duplicate them are dropped. Atoms missing from
// the vocabulary are segmented by greedy longest-prefix matching.
inline Vocabulary load_external_vocab(const std::string& path) {
  std::vector<std::string> lines(kSpecialTokens.begin(), kSpecialTokens.end());
  std::unordered_map<std::string, bool> seen;
  for (auto s : kSpecialTokens) seen[std::string(s)] = true;
  for (auto& piece : read_vocab_lines(path)) {
    if (piece.empty() || seen.count(piece)) continue;
    seen[piece] = true;
    lines.push_back(piece);
  }
  return Vocabulary::from_lines(lines, /*subword=*/true);
}

namespace detail {

inline void append_atom_ids(const Vocabulary& vocab, std::string_view atom, std::vector<std::int32_t>& out) {
  const std::int32_t id = vocab.id_of(atom);
  if (id != Vocabulary::kUnk || !vocab.subword()) {
    out.push_back(id);
    return;
  }
  std::size_t i = 0;
  while (i < atom.size()) {
    std::size_t len = atom.size() - i;
    std::int32_t piece = Vocabulary::kUnk;
    for (; len > 0; --len) {
      piece = vocab.id_of(atom.substr(i, len));
      if (piece != Vocabulary::kUnk) break;
    }
    if (len == 0) {
      out.push_back(Vocabulary::kUnk);
      len = 1;
    } else {
      out.push_back(piece);
    }
    i += len;
  }
}

}  // namespace detail

// Body token ids without framing.
inline std::vector<std::int32_t> tokenize_body(std::string_view code, const Vocabulary& vocab) {
  std::vector<std::int32_t> ids;
  for (auto atom : split_atoms(code)) detail::append_atom_ids(vocab, atom, ids);
  return ids;
}

// Framed length ([CLS] + body + [EOS]) before any truncation.
inline std::size_t framed_length(std::string_view code, const Vocabulary& vocab) {
  return tokenize_body(code, vocab).size() + 2;
}

// [CLS] + body + [EOS], right-truncating the body so the framing fits.
inline TokenSequence encode(std::string_view code, const Vocabulary& vocab, std::size_t max_tokens = 512) {
  if (max_tokens < 2) throw ConfigError("encode: max_tokens must be >= 2");
  auto body = tokenize_body(code, vocab);
  if (body.size() + 2 > max_tokens) body.resize(max_tokens - 2);
  TokenSequence seq;
  seq.ids.reserve(body.size() + 2);
  seq.ids.push_back(Vocabulary::kCls);
  seq.ids.insert(seq.ids.end(), body.begin(), body.end());
  seq.ids.push_back(Vocabulary::kEos);
  return seq;
}

// Space-joined body tokens; framing and padding ids are dropped.
inline std::string decode(std::span<const std::int32_t> ids, const Vocabulary& vocab) {
  std::string out;
  for (auto id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == Vocabulary::kCls || id == Vocabulary::kEos || id == Vocabulary::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace mulvuln

#endif  // MULVULN_TOKENIZER_HPP
