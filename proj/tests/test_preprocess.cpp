#include <gtest/gtest.h>

#include "mulvuln/preprocess.hpp"

using namespace mulvuln;

namespace {

CodeSample sample(std::string id, Language lang, std::string code, int label = 0) {
  CodeSample s;
  s.id = std::move(id);
  s.language = lang;
  s.code = std::move(code);
  s.label = label;
  return s;
}

std::string repeat_atoms(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "a ";
  return s;
}

}  // namespace

TEST(LengthFilter, BoundaryIsInclusive) {
  const auto v = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "a"});
  // 510 body atoms frame to exactly 512 and stay; 511 frame to 513 and go.
  const std::vector<CodeSample> in = {sample("keep", Language::C, repeat_atoms(510)),
                                      sample("drop", Language::C, repeat_atoms(511)),
                                      sample("tiny", Language::C, "a")};
  const auto r = filter_by_length(in, v, 512);
  ASSERT_EQ(r.kept.size(), 2u);
  EXPECT_EQ(r.kept[0].id, "keep");
  EXPECT_EQ(r.kept[1].id, "tiny");
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0].id, "drop");
}

TEST(LengthFilter, UsesActiveTokenizer) {
  // One atom is one token in a word vocabulary but several under subword
  // segmentation, so the same code can pass one filter and fail the other.
  const auto words = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "abcd"});
  const auto pieces = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "a", "b", "c", "d"}, true);
  const std::vector<CodeSample> in = {sample("x", Language::GO, "abcd abcd")};
  EXPECT_EQ(filter_by_length(in, words, 4).kept.size(), 1u);
  EXPECT_EQ(filter_by_length(in, pieces, 4).kept.size(), 0u);
}

TEST(Preprocess, StripsFiltersAndSplits) {
  const auto v = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "x"});
  std::vector<CodeSample> in;
  for (int i = 0; i < 20; ++i) {
    in.push_back(sample("c" + std::to_string(i), Language::C, "x; /* " + repeat_atoms(600) + " */", i % 2));
  }
  in.push_back(sample("only-comment", Language::PYTHON, "# nothing\n\"\"\"doc\"\"\"\n"));
  in.push_back(sample("long", Language::JAVA, repeat_atoms(600)));
  PreprocessOptions opt;
  opt.seed = 4;
  const auto r = preprocess(in, v, opt);
  // The long comment is stripped before counting, so all 20 C samples stay.
  EXPECT_EQ(r.split.train.size() + r.split.val.size() + r.split.test.size(), 20u);
  ASSERT_EQ(r.dropped_empty.size(), 1u);
  EXPECT_EQ(r.dropped_empty[0].id, "only-comment");
  ASSERT_EQ(r.dropped_length.size(), 1u);
  EXPECT_EQ(r.dropped_length[0].id, "long");
  for (const auto& s : r.split.train) EXPECT_EQ(s.code.find("/*"), std::string::npos);
}

TEST(Preprocess, UnterminatedCommentWarningNamesSample) {
  const auto v = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]"});
  std::vector<CodeSample> in = {sample("bad", Language::C, "int a; /* open"), sample("ok", Language::C, "int b;")};
  for (auto& s : in) s.split = SplitName::Train;
  const auto r = preprocess(in, v, {});
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.warnings[0].rfind("bad: ", 0), 0u);
  EXPECT_EQ(r.split.train.size(), 2u);
}
