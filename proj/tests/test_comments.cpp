#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "mulvuln/comments.hpp"

using namespace mulvuln;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << path;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixture(const std::string& name) { return std::string(MULVULN_TEST_DATA) + "/comments/" + name; }

std::size_t count_newlines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const std::vector<std::pair<std::string, Language>> kFixtures = {
    {"c", Language::C},       {"cpp", Language::CPP},   {"csharp", Language::CSHARP},
    {"go", Language::GO},     {"java", Language::JAVA}, {"javascript", Language::JAVASCRIPT},
    {"python", Language::PYTHON}};

}  // namespace

TEST(StripComments, GoldenFixtures) {
  for (const auto& [name, lang] : kFixtures) {
    const std::string in = slurp(fixture(name + ".in"));
    const std::string want = slurp(fixture(name + ".out"));
    EXPECT_EQ(strip_comments(in, lang), want) << name;
  }
}

TEST(StripComments, IdempotentOnFixtures) {
  for (const auto& [name, lang] : kFixtures) {
    const std::string once = strip_comments(slurp(fixture(name + ".in")), lang);
    EXPECT_EQ(strip_comments(once, lang), once) << name;
  }
}

TEST(StripComments, LineCountPreserved) {
  for (const auto& [name, lang] : kFixtures) {
    const std::string in = slurp(fixture(name + ".in"));
    EXPECT_EQ(count_newlines(strip_comments(in, lang)), count_newlines(in)) << name;
  }
}

TEST(StripComments, CodeWithoutCommentsIsUnchanged) {
  const std::string c = "int f(int a) {\n  return a / 2 * 3;\n}\n";
  EXPECT_EQ(strip_comments(c, Language::C), c);
  const std::string py = "x = a / b\ny = [1, 2]\n";
  EXPECT_EQ(strip_comments(py, Language::PYTHON), py);
}

TEST(StripComments, UnterminatedBlockWarns) {
  StripDiagnostics diag;
  const std::string out = strip_comments("int a; /* open\nforever", Language::JAVA, &diag);
  EXPECT_EQ(out, "int a; \n");
  ASSERT_EQ(diag.warnings.size(), 1u);
  EXPECT_NE(diag.warnings[0].find("unterminated"), std::string::npos);
}

TEST(StripComments, HashIsNotACommentInCFamily) {
  const std::string c = "#define N 4\n#include <x.h>\n";
  EXPECT_EQ(strip_comments(c, Language::C), c);
}

TEST(StripComments, PrefixedPythonStrings) {
  EXPECT_EQ(strip_comments("p = r'\\d+ # not'  # yes\n", Language::PYTHON), "p = r'\\d+ # not'  \n");
  EXPECT_EQ(strip_comments("b = f\"{x} # in\"\n", Language::PYTHON), "b = f\"{x} # in\"\n");
}

// Random programs built from code, string and comment fragments: every
// string fragment must survive and no comment body may.
TEST(StripComments, PropertyStringsSurviveCommentsVanish) {
  std::mt19937_64 rng(17);
  const std::vector<std::string> code = {"x = y + 1;", "f(a, b);", "return z;", "i++;"};
  const std::vector<std::string> strings = {"\"s//1\"", "\"s/*2*/\"", "'c'", "\"q\\\"3\""};
  for (int trial = 0; trial < 200; ++trial) {
    std::string src;
    std::vector<std::string> kept_strings;
    for (int k = 0; k < 8; ++k) {
      switch (rng() % 4) {
        case 0: src += code[rng() % code.size()] + " "; break;
        case 1: {
          const auto& s = strings[rng() % strings.size()];
          src += s + "; ";
          kept_strings.push_back(s);
          break;
        }
        case 2: src += "/* GONE" + std::to_string(trial) + " */ "; break;
        case 3: src += "// GONE" + std::to_string(trial) + "\n"; break;
      }
    }
    const std::string out = strip_comments(src, Language::C);
    EXPECT_EQ(out.find("GONE"), std::string::npos) << src;
    std::size_t pos = 0;
    for (const auto& s : kept_strings) {
      pos = out.find(s, pos);
      ASSERT_NE(pos, std::string::npos) << src;
      pos += s.size();
    }
    EXPECT_EQ(strip_comments(out, Language::C), out);
    EXPECT_EQ(count_newlines(out), count_newlines(src));
  }
}
