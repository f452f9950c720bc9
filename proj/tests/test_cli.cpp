#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef MULVULN_CLI
#error "MULVULN_CLI must name the mulvuln binary"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(MULVULN_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

const fs::path& work() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / "mulvuln_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

const std::string kTiny =
    " --set n_layers=1 --set d_model=8 --set d_ffn=8 --set n_heads=2 --set batch_size=8 --epochs 2 --lr 0.01";

std::string corpus() {
  static const std::string path = [] {
    const auto dir = work() / "syn";
    run("synth --n 10 --seed 4 --out " + dir.string());
    return (dir / "corpus.jsonl").string();
  }();
  return path;
}

}  // namespace

TEST(Cli, SynthIsDeterministic) {
  const auto a = work() / "syn_a", b = work() / "syn_b", c = work() / "syn_c";
  EXPECT_EQ(run("synth --n 5 --seed 1 --out " + a.string()).code, 0);
  EXPECT_EQ(run("synth --n 5 --seed 1 --out " + b.string()).code, 0);
  EXPECT_EQ(run("synth --n 5 --seed 2 --out " + c.string()).code, 0);
  EXPECT_EQ(slurp(a / "corpus.jsonl"), slurp(b / "corpus.jsonl"));
  EXPECT_NE(slurp(a / "corpus.jsonl"), slurp(c / "corpus.jsonl"));
  EXPECT_EQ(count_lines(slurp(a / "corpus.jsonl")), 35u);
}

TEST(Cli, PreprocessWritesSplitsAndStats) {
  const auto out = work() / "pre";
  const auto r = run("preprocess --data " + corpus() + " --out " + out.string());
  ASSERT_EQ(r.code, 0);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "stats.txt", "stats.json", "preprocess.log"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(count_lines(slurp(out / "train.jsonl")) + count_lines(slurp(out / "val.jsonl")) +
                count_lines(slurp(out / "test.jsonl")),
            70u);
  EXPECT_NE(r.out.find("Total"), std::string::npos);
}

TEST(Cli, TrainEvalReportExport) {
  const auto dir = work() / "run";
  const auto tr = run("train --data " + corpus() + " --out " + dir.string() + kTiny);
  ASSERT_EQ(tr.code, 0);
  for (const char* f : {"config.txt", "vocab.txt", "history.jsonl", "best.ckpt", "metrics.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(count_lines(slurp(dir / "history.jsonl")), 2u);

  const auto ev = run("eval --out " + dir.string());
  ASSERT_EQ(ev.code, 0);
  EXPECT_NE(ev.out.find("Methods   Recall   Precision   F1-score"), std::string::npos);
  EXPECT_NE(ev.out.find("JavaScript"), std::string::npos);
  EXPECT_NE(ev.out.find("Average"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "eval.jsonl"));

  const auto rep = run("report --out " + dir.string());
  ASSERT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("Training history"), std::string::npos);

  const auto ex = run("export-embeddings --split test --out " + dir.string());
  ASSERT_EQ(ex.code, 0);
  const std::string tsv = slurp(dir / "embeddings.tsv");
  EXPECT_GT(count_lines(tsv), 7u);
}

TEST(Cli, TrainingIsReproducible) {
  const auto a = work() / "rep_a", b = work() / "rep_b";
  ASSERT_EQ(run("train --data " + corpus() + " --out " + a.string() + kTiny).code, 0);
  ASSERT_EQ(run("train --data " + corpus() + " --out " + b.string() + kTiny).code, 0);
  EXPECT_EQ(slurp(a / "history.jsonl"), slurp(b / "history.jsonl"));
  EXPECT_EQ(slurp(a / "best.ckpt"), slurp(b / "best.ckpt"));
}

TEST(Cli, SweepPromptLengthHasFiveRows) {
  const auto dir = work() / "sweep_lp";
  const auto r = run("sweep --axis lp --data " + corpus() + " --out " + dir.string() + kTiny);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(count_lines(slurp(dir / "sweep.jsonl")), 5u);
  for (const char* v : {"  1 ", "  3 ", "  5 ", "  7 ", "  9 "}) EXPECT_NE(r.out.find(v), std::string::npos) << v;
}

TEST(Cli, SweepModeHasThreeRows) {
  const auto dir = work() / "sweep_mode";
  ASSERT_EQ(run("sweep --axis mode --data " + corpus() + " --out " + dir.string() + kTiny).code, 0);
  EXPECT_EQ(count_lines(slurp(dir / "sweep.jsonl")), 3u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --bogus").code, 1);
  EXPECT_EQ(run("train --data " + corpus() + " --out " + (work() / "bad_lp").string() + " --lp 0").code, 1);
  EXPECT_EQ(run("train --data " + corpus() + " --out " + (work() / "bad_key").string() + " --set depth=2").code, 1);
  EXPECT_EQ(run("train --data " + (work() / "missing.jsonl").string() + " --out " + (work() / "x").string()).code, 2);
  const auto nan_dir = work() / "nan";
  EXPECT_EQ(run("train --data " + corpus() + " --out " + nan_dir.string() + kTiny + " --set init_std=1e200").code, 3);
  EXPECT_TRUE(fs::exists(nan_dir / "diagnostic.ckpt"));
}
