#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "drfn/model.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string output;
};

CliRun run_drfn(const std::string& args) {
  const std::string cmd = std::string(DRFN_CLI_PATH) + " " + args + " 2>&1";
  CliRun r{-1, {}};
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_pgm(const fs::path& p, int h, int w, int variant) {
  std::ofstream out(p, std::ios::binary);
  out << "P5\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.put(char((x * 7 + y * 3 + variant * 50 + (x * y) % 23) % 256));
}

void write_ppm(const fs::path& p, int h, int w) {
  std::ofstream out(p, std::ios::binary);
  out << "P6\n" << w << " " << h << "\n255\n";
  for (int k = 0; k < h * w; ++k) {
    out.put(char((k * 13) % 256));
    out.put(char((k * 7 + 40) % 256));
    out.put(char((k * 3 + 90) % 256));
  }
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() / ("drfn-cli-" + std::to_string(std::random_device{}()));
    fs::create_directories(dir / "hr");
    write_pgm(dir / "hr" / "a.pgm", 32, 32, 0);
    write_pgm(dir / "hr" / "b.pgm", 32, 32, 1);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }

  void prepare(std::uint32_t scale = 4) {
    const CliRun r = run_drfn("prepare --hr-dir " + p("hr") + " --out " + p("p.drfp") + " --scale " +
                       std::to_string(scale) + " --lr-patch 4 --stride 4");
    ASSERT_EQ(r.code, 0) << r.output;
  }
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_drfn("--help").code, 0);
  EXPECT_EQ(run_drfn("").code, 1);
  EXPECT_EQ(run_drfn("frobnicate").code, 1);
  const CliRun r = run_drfn("prepare --hr-dir x --out y --no-such-flag");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("no-such-flag"), std::string::npos);
  EXPECT_EQ(run_drfn("train --archive a").code, 1);
}

TEST_F(Cli, PrepareReportsPairsAndPrintsResolvedConfig) {
  const CliRun r = run_drfn("prepare --hr-dir " + p("hr") + " --out " + p("p.drfp") + " --scale 4 --lr-patch 4 --stride 4");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("resolved config:"), std::string::npos);
  // two 32x32 images give 8x8 LR planes, each holding a 2x2 grid of patches
  EXPECT_NE(r.output.find("wrote 8 patch pairs"), std::string::npos);
}

TEST_F(Cli, PrepareGridAndAugmentationCounts) {
  fs::create_directories(dir / "one");
  write_pgm(dir / "one" / "x.pgm", 64, 64, 4);
  CliRun r = run_drfn("prepare --hr-dir " + p("one") + " --out " + p("o.drfp") + " --scale 4 --lr-patch 8 --stride 4");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("wrote 9 patch pairs"), std::string::npos) << r.output;
  r = run_drfn("prepare --hr-dir " + p("one") + " --out " + p("o.drfp") + " --scale 4 --lr-patch 8 --stride 4 --augment");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("wrote 72 patch pairs"), std::string::npos) << r.output;
}

TEST_F(Cli, EmptyHrDirectoryIsADataError) {
  fs::create_directories(dir / "empty");
  const CliRun r = run_drfn("prepare --hr-dir " + p("empty") + " --out " + p("x.drfp"));
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, SrProducesScaledImagesOfTheSameKind) {
  prepare();
  ASSERT_EQ(run_drfn("train --archive " + p("p.drfp") + " --out " + p("m.drfn") + " --channels 4 --cycles 1 --epochs 0")
                .code,
            0);
  write_pgm(dir / "in.pgm", 8, 8, 2);
  CliRun r = run_drfn("sr --model " + p("m.drfn") + " --in " + p("in.pgm") + " --out " + p("out.pgm"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(dir / "out.pgm").substr(0, 12), "P5\n32 32\n255");

  write_ppm(dir / "in.ppm", 5, 6);
  r = run_drfn("sr --model " + p("m.drfn") + " --in " + p("in.ppm") + " --out " + p("out.ppm"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(dir / "out.ppm").substr(0, 12), "P6\n24 20\n255");

  r = run_drfn("sr --model " + p("missing.drfn") + " --in " + p("in.pgm") + " --out " + p("o.pgm"));
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  prepare();
  std::ofstream(dir / "cfg.txt") << "# tiny run\nchannels = 3\ncycles=2\nepochs=0\nbatch=5\n";
  const CliRun r = run_drfn("train --config " + p("cfg.txt") + " --archive " + p("p.drfp") + " --out " + p("m.drfn") +
                     " --batch 7");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("channels = 3"), std::string::npos);
  EXPECT_NE(r.output.find("batch = 7"), std::string::npos);
  EXPECT_EQ(r.output.find("batch = 5"), std::string::npos);

  std::ofstream(dir / "bad.txt") << "channels\n";
  EXPECT_EQ(run_drfn("train --config " + p("bad.txt") + " --archive a --out b").code, 1);
}

TEST_F(Cli, ZeroEpochsSavesTheFreshModel) {
  prepare();
  const std::string common = " --archive " + p("p.drfp") + " --channels 4 --cycles 2 --epochs 0 --seed 9";
  ASSERT_EQ(run_drfn("train" + common + " --out " + p("a.drfn")).code, 0);
  ASSERT_EQ(run_drfn("train" + common + " --out " + p("b.drfn")).code, 0);
  EXPECT_EQ(slurp(dir / "a.drfn"), slurp(dir / "b.drfn"));
  EXPECT_EQ(slurp(dir / "a.drfn.log"), "iteration,epoch,lr,loss\n");
}

TEST_F(Cli, TrainWritesLogAndEpochCheckpoints) {
  prepare();
  const CliRun r = run_drfn("train --archive " + p("p.drfp") + " --out " + p("m.drfn") +
                     " --channels 4 --cycles 1 --epochs 2 --batch 1 --lr 0.01 --deterministic");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "m.drfn"));
  EXPECT_TRUE(fs::exists(dir / "m.drfn.epoch1"));
  EXPECT_TRUE(fs::exists(dir / "m.drfn.epoch2"));
  EXPECT_EQ(slurp(dir / "m.drfn.epoch2"), slurp(dir / "m.drfn"));
  std::istringstream log(slurp(dir / "m.drfn.log"));
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, "iteration,epoch,lr,loss");
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 16);  // 8 pairs, batch 1, 2 epochs
}

TEST_F(Cli, ShortTrainingLowersTheLoss) {
  prepare(2);
  const CliRun r = run_drfn("train --archive " + p("p.drfp") + " --out " + p("m.drfn") +
                        " --channels 4 --cycles 1 --batch 2 --lr 0.01 --clip 1e-4 --epochs 1000 --max-iterations 200"
                        " --no-epoch-checkpoints");
  ASSERT_EQ(r.code, 0) << r.output;
  std::istringstream log(slurp(dir / "m.drfn.log"));
  std::string line;
  std::getline(log, line);
  std::vector<double> losses;
  while (std::getline(log, line)) losses.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  ASSERT_EQ(losses.size(), 200u);
  EXPECT_LT(losses.back(), losses.front());
}

TEST_F(Cli, ZeroWeightModelGivesFlatOutput) {
  drfn::ModelConfig cfg;
  cfg.scale = 2;
  cfg.channels = 3;
  cfg.cycles = 1;
  drfn::DrfnModel m = drfn::build_drfn<float>(cfg, 1);
  for (auto& slot : drfn::registry(m)) slot.tensor->fill(0.0f);
  drfn::save_checkpoint(m, dir / "zero.drfn");
  write_pgm(dir / "in.pgm", 6, 5, 1);
  const CliRun r = run_drfn("sr --model " + p("zero.drfn") + " --in " + p("in.pgm") + " --out " + p("out.pgm"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string img = slurp(dir / "out.pgm");
  const std::string header = "P5\n10 12\n255\n";
  ASSERT_EQ(img.substr(0, header.size()), header);
  ASSERT_EQ(img.size(), header.size() + 120);
  // Y = 0 is below the studio-swing floor and saturates to black.
  for (std::size_t k = header.size(); k < img.size(); ++k) EXPECT_EQ(img[k], 0);
}

TEST_F(Cli, SrThenEvalIsReproducible) {
  prepare(2);
  ASSERT_EQ(run_drfn("train --archive " + p("p.drfp") + " --out " + p("m.drfn") + " --channels 4 --cycles 1 --epochs 0")
                .code,
            0);
  std::vector<std::string> csvs;
  for (const char* run : {"r1", "r2"}) {
    fs::create_directories(dir / run);
    for (const char* n : {"a.pgm", "b.pgm"}) {
      write_pgm(dir / "lr.pgm", 16, 16, n[0] - 'a');
      ASSERT_EQ(run_drfn("--deterministic sr --model " + p("m.drfn") + " --in " + p("lr.pgm") + " --out " +
                     (dir / run / n).string())
                    .code,
                0);
    }
    run_drfn("eval --sr-dir " + p(run) + " --gt-dir " + p("hr") + " --scale 2 --csv " + p(std::string(run) + ".csv"));
    csvs.push_back(slurp(dir / (std::string(run) + ".csv")));
  }
  EXPECT_EQ(slurp(dir / "r1" / "a.pgm"), slurp(dir / "r2" / "a.pgm"));
  EXPECT_FALSE(csvs[0].empty());
  EXPECT_EQ(csvs[0], csvs[1]);
}

TEST_F(Cli, BadArchiveIsADataError) {
  std::ofstream(dir / "bad.drfp") << "XXXXnot an archive";
  const CliRun r = run_drfn("train --archive " + p("bad.drfp") + " --out " + p("m.drfn") + " --channels 2");
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("format"), std::string::npos);
}

TEST_F(Cli, InvalidModelConfigIsAUsageError) {
  prepare();
  const CliRun r = run_drfn("train --archive " + p("p.drfp") + " --out " + p("m.drfn") + " --levels 7");
  EXPECT_EQ(r.code, 1) << r.output;
}

TEST_F(Cli, EvalWritesCsvAndFlagsFailures) {
  const CliRun ok = run_drfn("eval --sr-dir " + p("hr") + " --gt-dir " + p("hr") + " --scale 2 --csv " + p("e.csv"));
  ASSERT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(slurp(dir / "e.csv").find("a.pgm"), std::string::npos);

  fs::create_directories(dir / "sr");
  write_pgm(dir / "sr" / "a.pgm", 32, 32, 3);
  const CliRun missing = run_drfn("eval --sr-dir " + p("sr") + " --gt-dir " + p("hr") + " --csv " + p("f.csv"));
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.output.find("b.pgm"), std::string::npos);
}

TEST(CliSelftest, PassesAndPerturbationFails) {
  const auto t0 = std::chrono::steady_clock::now();
  const CliRun ok = run_drfn("--threads 1 selftest");
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("all checks passed"), std::string::npos);
  const CliRun bad = run_drfn("selftest --perturb grad/conv2d/f32");
  EXPECT_EQ(bad.code, 3) << bad.output;
  EXPECT_NE(bad.output.find("FAIL  grad/conv2d/f32"), std::string::npos);
}
