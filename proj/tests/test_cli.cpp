#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace bitquant;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + BITQUANT_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') out.push_back(line);
  return out;
}

std::string fixture(const char* name) { return "\"" + (fixture_dir() / name).string() + "\""; }

}  // namespace

TEST(Cli, QuantizeWritesThreeArtifacts) {
  const auto dir = scratch_dir("cli_quantize");
  ASSERT_EQ(run_cli("quantize " + fixture("teacher_cnn.bqnt") + " \"" + dir.string() + "\" --scheme pow2 --bits 6",
                    dir / "log.txt"),
            0)
      << slurp(dir / "log.txt");
  const auto sim = load_model(dir / "teacher_cnn.pow26.bqnt");
  const auto packed = load_packed(dir / "teacher_cnn.pow26.bqpk");
  EXPECT_EQ(packed.scheme, QuantScheme::PowerOfTwo);
  EXPECT_EQ(packed.bit_width, 6u);
  const auto be = slurp(dir / "teacher_cnn.pow26.be.csv");
  EXPECT_EQ(be.rfind("# bitquant quantize seed=", 0), 0u);
  EXPECT_EQ(data_lines(be).size(), packed.tensors.size() + 1);
  // simulated weights equal the dequantized packed codes
  for (const auto& q : unpack_quantized(packed)) EXPECT_EQ(sim.at(q.name).data, dequantize(q).data);
}

TEST(Cli, QuantizeIsDeterministic) {
  const auto a = scratch_dir("cli_det_a"), b = scratch_dir("cli_det_b");
  for (const auto& d : {a, b})
    ASSERT_EQ(run_cli("quantize " + fixture("overlap_mlp.bqnt") + " --out \"" + d.string() + "\" --bits 4", d / "log.txt"), 0);
  EXPECT_EQ(read_file(a / "overlap_mlp.asymm4.bqpk"), read_file(b / "overlap_mlp.asymm4.bqpk"));
  EXPECT_EQ(read_file(a / "overlap_mlp.asymm4.bqnt"), read_file(b / "overlap_mlp.asymm4.bqnt"));
}

TEST(Cli, BadArgumentsExitWithTwo) {
  const auto dir = scratch_dir("cli_bad");
  const auto log = dir / "log.txt";
  EXPECT_EQ(run_cli("quantize " + fixture("teacher_cnn.bqnt") + " --bits 9 --out \"" + dir.string() + "\"", log), 2);
  EXPECT_EQ(run_cli("quantize " + fixture("teacher_cnn.bqnt") + " --scheme int4 --out \"" + dir.string() + "\"", log), 2);
  EXPECT_EQ(run_cli("eval " + fixture("overlap_mlp.bqnt") + " \"" + (dir / "missing.bqds").string() + "\"", log), 2);
  EXPECT_EQ(run_cli("bench --layers 8x8 --reps 3 --out \"" + dir.string() + "\"", log), 2);
  EXPECT_EQ(run_cli("nonsense", log), 2);
  EXPECT_FALSE(fs::exists(dir / "teacher_cnn.asymm9.bqnt"));
}

TEST(Cli, CorruptModelExitsWithTwo) {
  const auto dir = scratch_dir("cli_corrupt");
  auto bytes = read_file(fixture_dir() / "overlap_mlp.bqnt");
  bytes.resize(bytes.size() / 2);
  write_file(dir / "cut.bqnt", bytes);
  EXPECT_EQ(run_cli("quantize \"" + (dir / "cut.bqnt").string() + "\" --out \"" + dir.string() + "\"", dir / "log.txt"), 2);
  EXPECT_NE(slurp(dir / "log.txt").find("error:"), std::string::npos);
}

TEST(Cli, EvalSweepAndClusterPipeline) {
  const auto dir = scratch_dir("cli_eval");
  ASSERT_EQ(run_cli("eval " + fixture("overlap_mlp.bqnt") + " " + fixture("overlap_mlp.bqds") + " --out \"" +
                        dir.string() + "\" --seed 5",
                    dir / "log.txt"),
            0)
      << slurp(dir / "log.txt");
  const auto csv = slurp(dir / "eval.csv");
  EXPECT_EQ(csv.rfind("# bitquant eval seed=5", 0), 0u);
  EXPECT_EQ(data_lines(csv).size(), 1u + 8u);  // header, FP32, 2..8
  for (unsigned n = 2; n <= 8; ++n) EXPECT_TRUE(fs::exists(dir / ("confusion_asymm" + std::to_string(n) + ".csv")));
  ASSERT_TRUE(fs::exists(dir / "confusion_fp32.csv"));

  const auto conf = "\"" + (dir / "confusion_asymm3.csv").string() + "\"";
  ASSERT_EQ(run_cli("cluster " + conf + " --merges 1 --out \"" + dir.string() + "\"", dir / "log.txt"), 0);
  EXPECT_EQ(slurp(dir / "grouping.txt").find("cat,dog\n") != std::string::npos, true) << slurp(dir / "grouping.txt");
  const auto grouped = confusion_from_csv(slurp(dir / "grouped_confusion.csv"));
  EXPECT_EQ(grouped.classes(), 5u);

  EXPECT_EQ(run_cli("cluster " + conf + " --merges 5 --out \"" + dir.string() + "\"", dir / "log.txt"), 2);
  EXPECT_EQ(run_cli("cluster " + conf + " --merges 1 --logit-sum-grouping --out \"" + dir.string() + "\"", dir / "log.txt"), 2);
  EXPECT_EQ(run_cli("cluster " + conf + " --merges 1 --logit-sum-grouping --model " + fixture("overlap_mlp.bqnt") +
                        " --data " + fixture("overlap_mlp.bqds") + " --out \"" + dir.string() + "\"",
                    dir / "log.txt"),
            0);
  EXPECT_NE(slurp(dir / "log.txt").find("logit-sum"), std::string::npos);
}

TEST(Cli, ReportWritesSizeAndDistributionFiles) {
  const auto dir = scratch_dir("cli_report");
  ASSERT_EQ(run_cli("report " + fixture("teacher_cnn.bqnt") + " --scheme asymm,pow2 --bits 4,6 --out \"" + dir.string() + "\"",
                    dir / "log.txt"),
            0)
      << slurp(dir / "log.txt");
  EXPECT_EQ(data_lines(slurp(dir / "sizes.csv")).size(), 1u + 4u);
  for (const char* f : {"sizes.txt", "quartiles.csv", "histograms.csv", "bit_efficiency.csv"})
    EXPECT_EQ(slurp(dir / f).rfind("# bitquant report seed=", 0), 0u) << f;
  EXPECT_NE(slurp(dir / "log.txt").find("average exponent index bits"), std::string::npos);
}

TEST(Cli, BenchEmitsBothPaths) {
  const auto dir = scratch_dir("cli_bench");
  ASSERT_EQ(run_cli("bench --layers 16x16,4x32 --reps 30 --frames 2 --out \"" + dir.string() + "\"", dir / "log.txt"), 0)
      << slurp(dir / "log.txt");
  const auto rows = data_lines(slurp(dir / "bench.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "path,layer_shape,median_ns,iqr_ns");
  EXPECT_EQ(rows[1].rfind("fp32_multiply,16x16,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("int_shift,16x16,", 0), 0u);
}

TEST(Cli, MakeFixturesReproducesCheckedInFiles) {
  const auto dir = scratch_dir("cli_fixtures");
  ASSERT_EQ(run_cli("make-fixtures --out \"" + dir.string() + "\"", dir / "log.txt"), 0);
  for (const char* f : {"teacher_cnn.bqnt", "teacher_cnn.bqds", "overlap_mlp.bqnt", "overlap_mlp.bqds"})
    EXPECT_EQ(read_file(dir / f), read_file(fixture_dir() / f)) << f;
}
