#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mulvuln/tokenizer.hpp"

using namespace mulvuln;

namespace {

std::vector<std::string> atoms(std::string_view s) {
  std::vector<std::string> out;
  for (auto a : split_atoms(s)) out.emplace_back(a);
  return out;
}

CodeSample sample(std::string code) {
  CodeSample s;
  s.id = "t";
  s.code = std::move(code);
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mulvuln_test_tokenizer";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Atoms, SplitsIdentifiersOperatorsAndNumbers) {
  EXPECT_EQ(atoms("if (a->b >= 10.5) x += y_1;"),
            (std::vector<std::string>{"if", "(", "a", "->", "b", ">=", "10.5", ")", "x", "+=", "y_1", ";"}));
  EXPECT_EQ(atoms("a>>>=b"), (std::vector<std::string>{"a", ">>>=", "b"}));
  EXPECT_EQ(atoms("$el === null"), (std::vector<std::string>{"$el", "===", "null"}));
  EXPECT_EQ(atoms("s = \"h\xc3\xa9\""), (std::vector<std::string>{"s", "=", "\"", "h", "\xc3\xa9", "\""}));
  EXPECT_TRUE(atoms(" \n\t ").empty());
}

TEST(Vocab, SpecialTokensComeFirst) {
  Vocabulary v;
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(Vocabulary::kCls), "[CLS]");
  EXPECT_EQ(v.token(Vocabulary::kEos), "[EOS]");
  EXPECT_EQ(v.token(Vocabulary::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "[UNK]");
  EXPECT_THROW(v.token(4), DataError);
}

TEST(Vocab, FrequencyRankingWithLexicographicTies) {
  // counts: x 4, ( 2, ) 2, ; 2, = 1, y 1
  const auto v = build_vocab({sample("x x ( ) ;"), sample("x = x ( ) ; y")}, 8);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"[CLS]", "[EOS]", "[PAD]", "[UNK]", "x", "(", ")", ";"}));
  EXPECT_EQ(v.id_of("y"), Vocabulary::kUnk);
  EXPECT_THROW(build_vocab({sample("x")}, 7), ConfigError);
}

TEST(Vocab, SaveLoadRoundTrip) {
  const auto v = build_vocab({sample("int main ( ) { return 0 ; }")}, 50);
  const auto path = temp_file("vocab.txt").string();
  save_vocab(path, v);
  const auto back = load_vocab(path);
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.fingerprint(), v.fingerprint());
}

TEST(Vocab, RejectsBadFiles) {
  EXPECT_THROW(Vocabulary::from_lines({"[CLS]", "[EOS]"}), DataError);
  EXPECT_THROW(Vocabulary::from_lines({"[EOS]", "[CLS]", "[PAD]", "[UNK]"}), DataError);
  EXPECT_THROW(Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "a", "a"}), DataError);
  EXPECT_THROW(load_vocab(temp_file("missing.txt").string()), DataError);
}

TEST(Vocab, FingerprintDependsOnOrder) {
  const auto a = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "a", "b"});
  const auto b = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "b", "a"});
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Encode, FramesAndMapsUnknowns) {
  const auto v = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "return", "x", ";"});
  const auto seq = encode("return x + 1;", v);
  EXPECT_EQ(seq.ids, (std::vector<std::int32_t>{0, 4, 5, 3, 3, 6, 1}));
  EXPECT_EQ(framed_length("return x + 1;", v), 7u);
  EXPECT_EQ(decode(seq.ids, v), "return x [UNK] [UNK] ;");
}

TEST(Encode, TruncatesBodyKeepingFraming) {
  const auto v = Vocabulary::from_lines({"[CLS]", "[EOS]", "[PAD]", "[UNK]", "a"});
  const auto seq = encode("a a a a a a", v, 5);
  EXPECT_EQ(seq.ids, (std::vector<std::int32_t>{0, 4, 4, 4, 1}));
  EXPECT_EQ(framed_length("a a a a a a", v), 8u);
  EXPECT_THROW(encode("a", v, 1), ConfigError);
}

TEST(Encode, PropertyDecodeEncodeRoundTripsInVocabText) {
  const auto v = build_vocab({sample("int x = y + 1 ; return ( x ) ; while { } ->")}, 100);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::string text;
    const std::size_t n = 1 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      if (!text.empty()) text += ' ';
      text += v.token(static_cast<std::int32_t>(4 + rng() % (v.size() - 4)));
    }
    const auto seq = encode(text, v, 1000);
    EXPECT_EQ(seq.length(), n + 2);
    EXPECT_EQ(decode(seq.ids, v), text);
    for (std::size_t cap = 2; cap < n + 3; cap += 3) EXPECT_LE(encode(text, v, cap).length(), cap);
  }
}

TEST(ExternalVocab, GreedyLongestPrefixSegmentation) {
  const auto path = temp_file("pieces.txt").string();
  {
    std::ofstream out(path);
    out << "str\nstrcpy\ncpy\nbuf\n[CLS]\n_\n";
  }
  const auto v = load_external_vocab(path);
  EXPECT_TRUE(v.subword());
  EXPECT_EQ(v.size(), 4u + 5u);  // duplicate [CLS] dropped
  const auto ids = tokenize_body("strcpy strbuf_x", v);
  // strcpy is a whole piece; strbuf_x -> str, buf, _, [UNK]
  EXPECT_EQ(ids, (std::vector<std::int32_t>{v.id_of("strcpy"), v.id_of("str"), v.id_of("buf"), v.id_of("_"),
                                            Vocabulary::kUnk}));
}
