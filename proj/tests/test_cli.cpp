#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fdd/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

/// Runs the CLI; `env` prefixes the command, stderr is captured on request.
Result fdd_cli(const std::string& args, bool with_stderr = false,
               const std::string& env = "") {
  Result r;
  const std::string cmd = env + " '" + FDD_CLI_PATH + "' " + args +
                          (with_stderr ? " 2>&1" : " 2>/dev/null");
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "fdd_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(fdd_cli("make-corpus shapes --count 10 --size 64 --seed 1 --out " +
                      q(root_ / "real"))
                  .status,
              0);
    std::ofstream(root_ / "cfg.json") << R"({"max_epochs": 2, "batch_size": 5})";
    ASSERT_EQ(fdd_cli("train-dae --quiet --corpus " + q(root_ / "real") + " --config " +
                      q(root_ / "cfg.json") + " --out " + q(root_ / "m.dae"))
                  .status,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string q(const fs::path& p) { return "'" + p.string() + "'"; }
  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, MakeCorpusIsByteIdentical) {
  ASSERT_EQ(fdd_cli("make-corpus shapes --count 10 --size 64 --seed 1 --out " +
                    q(root_ / "again"))
                .status,
            0);
  for (const auto& e : fs::directory_iterator(root_ / "real"))
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "again" / e.path().filename()));
}

TEST_F(Cli, TrainedCheckpointLoadsWithHistory) {
  const auto model = fdd::load_checkpoint<float>((root_ / "m.dae").string());
  EXPECT_EQ(model.history().size(), 2u);
  EXPECT_EQ(model.params().step(), 4u);  // 2 epochs x 2 batches
  const std::string csv = slurp(root_ / "m.dae.loss.csv");
  EXPECT_EQ(csv.rfind("epoch,loss\n0,", 0), 0u);
}

TEST_F(Cli, ResumeContinuesAdamState) {
  ASSERT_EQ(fdd_cli("train-dae --quiet --corpus " + q(root_ / "real") + " --config " +
                    q(root_ / "cfg.json") + " --resume " + q(root_ / "m.dae") +
                    " --out " + q(root_ / "m2.dae"))
                .status,
            0);
  const auto model = fdd::load_checkpoint<float>((root_ / "m2.dae").string());
  EXPECT_EQ(model.history().size(), 4u);
  EXPECT_GE(model.params().step(), 6u);
}

TEST_F(Cli, InvalidConfigKeyExitsTwoNamingKey) {
  std::ofstream(root_ / "bad.json") << R"({"learning_rate": 0.1})";
  const std::string cmd = "train-dae --corpus " + q(root_ / "real") + " --config " +
                          q(root_ / "bad.json") + " --out " + q(root_ / "x.dae");
  const Result r = fdd_cli(cmd, true);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("learning_rate"), std::string::npos);
}

TEST_F(Cli, ScoreOfSetAgainstItselfIsZero) {
  const Result r = fdd_cli("score --metric fdd --encoder " + q(root_ / "m.dae") +
                           " --real " + q(root_ / "real") + " --gen " + q(root_ / "real"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "0.000000\n");
}

TEST_F(Cli, ScoreJsonCarriesHashAndSeedAndRepeats) {
  ASSERT_EQ(fdd_cli("disturb --in " + q(root_ / "real") + " --out " + q(root_ / "gen") +
                    " --spec patch_swap:alpha=0.25 --seed 2")
                .status,
            0);
  const std::string args = "score --json --metric tdd --seed 5 --encoder " +
                           q(root_ / "m.dae") + " --real " + q(root_ / "real") +
                           " --gen " + q(root_ / "gen");
  const Result a = fdd_cli(args), b = fdd_cli(args);
  ASSERT_EQ(a.status, 0);
  const auto ja = nlohmann::json::parse(a.out), jb = nlohmann::json::parse(b.out);
  EXPECT_EQ(ja["seed"], 5);
  EXPECT_EQ(ja["config_hash"].get<std::string>().size(), 16u);
  EXPECT_EQ(ja["score"].get<double>(), jb["score"].get<double>());
  EXPECT_GT(ja["score"].get<double>(), 0.0);
}

TEST_F(Cli, FeatureCacheDirGivesSameScore) {
  const std::string args = "score --encoder " + q(root_ / "m.dae") + " --real " +
                           q(root_ / "real") + " --gen " + q(root_ / "real");
  const std::string env = "FDD_CACHE_DIR=" + q(root_ / "cache");
  const Result plain = fdd_cli(args);
  EXPECT_EQ(fdd_cli(args, false, env).out, plain.out);  // cold
  EXPECT_EQ(fdd_cli(args, false, env).out, plain.out);  // warm
  EXPECT_FALSE(fs::is_empty(root_ / "cache"));
}

TEST_F(Cli, MissingDirectoryOrTinySetExitsTwo) {
  EXPECT_EQ(fdd_cli("score --encoder " + q(root_ / "m.dae") + " --real " +
                    q(root_ / "absent") + " --gen " + q(root_ / "real"))
                .status,
            2);
  fs::create_directories(root_ / "one");
  fs::copy_file(root_ / "real" / "000000.png", root_ / "one" / "000000.png",
                fs::copy_options::overwrite_existing);
  EXPECT_EQ(fdd_cli("score --encoder " + q(root_ / "m.dae") + " --real " +
                    q(root_ / "one") + " --gen " + q(root_ / "real"))
                .status,
            2);
  EXPECT_EQ(fdd_cli("score --real x").status, 2);
}

TEST_F(Cli, SensitivityAndConsistencyWriteHashedCsv) {
  const Result s = fdd_cli("sensitivity --encoder " + q(root_ / "m.dae") + " --data " +
                           q(root_ / "real") + " --groups 2 --k 4 --metrics fdd,kdd --seed 1");
  ASSERT_EQ(s.status, 0);
  EXPECT_EQ(s.out.rfind("# config_hash=", 0), 0u);
  EXPECT_EQ(std::count(s.out.begin(), s.out.end(), '\n'), 2 + 2 * 5 * 2);
  const Result c = fdd_cli("consistency --encoder " + q(root_ / "m.dae") + " --data " +
                           q(root_ / "real") + " --kind patch_swap --ladder 0.125,0.25,0.5");
  ASSERT_EQ(c.status, 0);
  EXPECT_NE(c.out.find("level,metric,score,verdict\n"), std::string::npos);
}

TEST_F(Cli, GradcamWritesOverlayAndGrid) {
  ASSERT_EQ(fdd_cli("gradcam --encoder " + q(root_ / "m.dae") + " --images " +
                    q(root_ / "real") + " --out " + q(root_ / "cam"))
                .status,
            0);
  EXPECT_TRUE(fs::exists(root_ / "cam" / "000003.png"));
  const std::string grid = slurp(root_ / "cam" / "000003.csv");
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 8);
  EXPECT_EQ(fdd_cli("gradcam --layer dec0 --encoder " + q(root_ / "m.dae") +
                    " --images " + q(root_ / "real") + " --out " + q(root_ / "cam"))
                .status,
            2);
}

TEST_F(Cli, RankDiffusionFixture) {
  const Result r =
      fdd_cli(std::string("rank --scores '") + FDD_FIXTURE_DIR + "/diffusion_scores.csv'");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("FDD order: [DDPM, DDIM, EDM]\n"), std::string::npos);
  EXPECT_NE(r.out.find("FID order: [EDM, DDPM, DDIM]\n"), std::string::npos);
  EXPECT_NE(r.out.find("disagreement: FDD vs FID\n"), std::string::npos);
}
