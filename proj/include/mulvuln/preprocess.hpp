#ifndef MULVULN_PREPROCESS_HPP
#define MULVULN_PREPROCESS_HPP

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mulvuln/comments.hpp"
#include "mulvuln/corpus.hpp"
#include "mulvuln/tokenizer.hpp"

namespace mulvuln {

struct LengthFilterResult {
  std::vector<CodeSample> kept;
  std::vector<CodeSample> dropped;
};

// Keeps samples whose framed token count ([CLS] + body + [EOS]) is at most
// max_tokens. Order is preserved in both partitions.
inline LengthFilterResult filter_by_length(const std::vector<CodeSample>& samples, const Vocabulary& vocab,
                                           std::size_t max_tokens = 512) {
  LengthFilterResult out;
  for (const auto& s : samples) {
    if (framed_length(s.code, vocab) <= max_tokens) out.kept.push_back(s);
    else out.dropped.push_back(s);
  }
  return out;
}

struct PreprocessOptions {
  std::size_t max_tokens = 512;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

struct PreprocessResult {
  DatasetSplit split;
  std::vector<CodeSample> dropped_length;  // over the token limit
  std::vector<CodeSample> dropped_empty;   // nothing left after stripping
  std::vector<std::string> warnings;
};

// Comment stripping, length filtering with the active vocabulary, then
// splitting (pre-assigned splits pass through).
inline PreprocessResult preprocess(std::vector<CodeSample> samples, const Vocabulary& vocab,
                                   const PreprocessOptions& opt) {
  PreprocessResult out;
  std::vector<CodeSample> stripped;
  stripped.reserve(samples.size());
  for (auto& s : samples) {
    StripDiagnostics diag;
    s.code = strip_comments(s.code, s.language, &diag);
    for (auto& w : diag.warnings) out.warnings.push_back(s.id + ": " + w);
    if (s.code.find_first_not_of(" \t\r\n\f\v") == std::string::npos) {
      out.dropped_empty.push_back(std::move(s));
      continue;
    }
    stripped.push_back(std::move(s));
  }
  auto filtered = filter_by_length(stripped, vocab, opt.max_tokens);
  out.dropped_length = std::move(filtered.dropped);
  out.split = split_dataset(filtered.kept, opt.ratios, opt.seed);
  return out;
}

}  // namespace mulvuln

#endif  // MULVULN_PREPROCESS_HPP
