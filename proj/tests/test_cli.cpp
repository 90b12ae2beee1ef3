#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
CliResult run(const std::string& args) {
  CliResult r;
  const std::string cmd = std::string(DCTNET_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json last_json_line(const std::string& out) {
  std::istringstream in(out);
  std::string line, last;
  while (std::getline(in, line))
    if (line.starts_with("{")) last = line;
  return nlohmann::json::parse(last);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("dctnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const char* kTinyTrain = "train --synthetic 4 --size 32 --crop 32 --epochs 1 --batch 2 --max-clicks 2 --seed 3";

}  // namespace

TEST_F(CliTest, TrainWritesCheckpointAndLog) {
  const CliResult r = run(std::string(kTinyTrain) + " --out " + path("m.ckpt") + " --log " + path("log.jsonl"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("m.ckpt")));
  const auto j = last_json_line(slurp(path("log.jsonl")));
  EXPECT_EQ(j["epoch"], 1);
  EXPECT_GT(j["interactions"].get<int>(), 0);
}

TEST_F(CliTest, DeterministicTrainingGivesIdenticalCheckpoints) {
  ASSERT_EQ(run(std::string(kTinyTrain) + " --deterministic --out " + path("a.ckpt")).code, 0);
  ASSERT_EQ(run(std::string(kTinyTrain) + " --deterministic --out " + path("b.ckpt")).code, 0);
  EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
}

TEST_F(CliTest, OracleEvaluationIsPerfect) {
  const CliResult r = run("evaluate --oracle --synthetic 10 --size 32 --report " + path("r.json") + " --csv " + path("r.csv") +
                    " --curve " + path("c.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = last_json_line(r.out);
  EXPECT_EQ(j["mnoc"], 1.0);
  EXPECT_EQ(j["auc"], 1.0);
  EXPECT_EQ(nlohmann::json::parse(slurp(path("r.json")))["traces"].size(), 10u);
  std::istringstream csv(slurp(path("r.csv")));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 12);
}

TEST_F(CliTest, EvaluateAndSimulateATrainedModel) {
  ASSERT_EQ(run(std::string(kTinyTrain) + " --out " + path("m.ckpt")).code, 0);
  CliResult r = run("evaluate --model " + path("m.ckpt") + " --synthetic 3 --size 32 --cap 3 --drag auto");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = last_json_line(r.out);
  EXPECT_GE(j["mnoc"].get<double>(), 1.0);
  EXPECT_LE(j["mnoc"].get<double>(), 3.0);

  ASSERT_EQ(run("generate --count 1 --size 32 --seed 9 --out-dir " + path("data")).code, 0);
  fs::path image, mask;
  for (const auto& e : fs::directory_iterator(path("data")))
    (e.path().stem().string().ends_with("_mask") ? mask : image) = e.path();
  r = run("simulate --model " + path("m.ckpt") + " --image " + image.string() + " --mask " + mask.string() +
          " --max-clicks 2 --dump-dir " + path("dump"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto trace = nlohmann::json::parse(slurp(path("dump/trace.json")));
  ASSERT_GE(trace["records"].size(), 1u);
  for (const char* suffix : {"positive", "negative", "probability", "mask"})
    EXPECT_TRUE(fs::exists(path(std::string("dump/click_1_") + suffix + ".png"))) << suffix;
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --synthetic 2").code, 1);                        // --out missing
  EXPECT_EQ(run("evaluate --synthetic 2").code, 1);                     // neither --model nor --oracle
  EXPECT_EQ(run("evaluate --oracle --synthetic 2 --drag sideways").code, 1);
  EXPECT_EQ(run("evaluate --model " + path("missing.ckpt") + " --synthetic 2").code, 2);
  std::ofstream(path("bad.ckpt")) << "garbage";
  EXPECT_EQ(run("evaluate --model " + path("bad.ckpt") + " --synthetic 2").code, 2);
  EXPECT_EQ(run("evaluate --oracle --data " + path("nowhere")).code, 2);
  EXPECT_EQ(run("train --synthetic 2 --size 30 --out " + path("x.ckpt")).code, 1);
  const CliResult serve = run("serve --model " + path("missing.ckpt") + " --port 0");
  EXPECT_EQ(serve.code, 2);
  EXPECT_NE(serve.out.find("checkpoint error"), std::string::npos);
  EXPECT_EQ(run("--help").code, 0);
}
