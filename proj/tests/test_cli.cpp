#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() /
           ("vslp_cli_" + std::to_string(rd()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult invoke(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" VSLP_CLI_PATH
                            "' " + args + " 2>/dev/null";
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  std::string slurp(const fs::path& rel) const {
    std::ifstream in(dir_ / rel, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

const char* kSynth = "synth --n 4 --size 32 --rotations 6 --seed 7";

TEST_F(Cli, ArgumentErrorsExitTwo) {
  EXPECT_EQ(invoke("").code, 2);
  EXPECT_EQ(invoke("frobnicate").code, 2);
  EXPECT_EQ(invoke("synth --bogus 1 --out s").code, 2);
  EXPECT_EQ(invoke("posterior --manifest missing.jsonl --out p").code, 2);
  EXPECT_EQ(invoke("render --image nope.vslpf --mask nope.vslpf --out v").code, 2);
}

TEST_F(Cli, SynthIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(invoke(std::string(kSynth) + " --out a").code, 0);
  ASSERT_EQ(invoke(std::string(kSynth) + " --out b").code, 0);
  EXPECT_EQ(slurp("a/manifest.jsonl"), slurp("b/manifest.jsonl"));
  EXPECT_EQ(slurp("a/item_0002_image.vslpf"), slurp("b/item_0002_image.vslpf"));
  EXPECT_EQ(slurp("a/item_0002_stack.vslpf"), slurp("b/item_0002_stack.vslpf"));
}

TEST_F(Cli, SuccessPrintsOneJsonLine) {
  const CliResult r = invoke(std::string(kSynth) + " --out a");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.is_object());
}

TEST_F(Cli, WrittenConfigReproducesRun) {
  ASSERT_EQ(invoke(std::string(kSynth) + " --noise 0.1 --out a").code, 0);
  auto cfg = nlohmann::json::parse(slurp("a/config.json"));
  cfg["out"] = "b";
  std::ofstream(dir_ / "cfg.json") << cfg.dump();
  ASSERT_EQ(invoke("synth --config cfg.json").code, 0);
  EXPECT_EQ(slurp("a/manifest.jsonl"), slurp("b/manifest.jsonl"));
  EXPECT_EQ(slurp("a/item_0001_stack.vslpf"), slurp("b/item_0001_stack.vslpf"));
  // Flags override the file.
  ASSERT_EQ(invoke("synth --config cfg.json --seed 8 --out c").code, 0);
  EXPECT_NE(slurp("a/manifest.jsonl"), slurp("c/manifest.jsonl"));
}

TEST_F(Cli, UnknownConfigKeyRejected) {
  std::ofstream(dir_ / "cfg.json") << R"({"n": 2, "colour": "blue"})";
  EXPECT_EQ(invoke("synth --config cfg.json --out a").code, 2);
}

TEST_F(Cli, StrideBeyondPatchIsAnArgumentError) {
  EXPECT_EQ(invoke("synth --n 1 --size 32 --patch 8 --stride 12 --out a").code, 2);
}

TEST_F(Cli, EvalOnGroundTruthIsPerfect) {
  ASSERT_EQ(invoke(std::string(kSynth) + " --out a").code, 0);
  ASSERT_EQ(invoke("eval --manifest a/manifest.jsonl --key mask --gt-key mask --out e").code, 0);
  const auto s = nlohmann::json::parse(slurp("e/summary.json"));
  EXPECT_EQ(s["dice"].get<double>(), 1.0);
  EXPECT_EQ(s["dice_std"].get<double>(), 0.0);
  EXPECT_EQ(s["miou"].get<double>(), 1.0);
}

TEST_F(Cli, FullPipeline) {
  ASSERT_EQ(invoke(std::string(kSynth) + " --out s").code, 0);
  ASSERT_EQ(invoke("stage1-train --manifest s/manifest.jsonl --epochs 1 --out c").code, 0);
  ASSERT_EQ(invoke("tta --manifest s/manifest.jsonl --model c --rotations 4 --out t").code, 0);
  ASSERT_EQ(invoke("posterior --manifest t/manifest.jsonl --bins 3 --out p").code, 0);
  ASSERT_EQ(invoke("train-stage2 --manifest p/manifest.jsonl --variant diff --epochs 1 "
                "--steps 3 --widths 4,8 --kernel 3 --out m").code, 0);
  const auto model = nlohmann::json::parse(slurp("m/model.json"));
  EXPECT_EQ(model["variant"], "diff");
  ASSERT_EQ(invoke("refine --manifest p/manifest.jsonl --model m --variant diff --steps 50 "
                "--snapshots 0,9,19 --out r").code, 0);
  std::ifstream trace(dir_ / "r/item_0000_trace.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(trace, l);) ++lines;
  EXPECT_EQ(lines, 50u);
  // A GMM run cannot reuse a diffusion regulariser.
  EXPECT_EQ(invoke("refine --manifest p/manifest.jsonl --model m --variant gmm --out g").code, 2);
  ASSERT_EQ(invoke("eval --manifest r/manifest.jsonl --key pred_mask --gt-key mask --out e").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "e/per_image.csv"));
  ASSERT_EQ(invoke("render --manifest r/manifest.jsonl --item item_0001 --out v").code, 0);
  for (const char* f : {"v/item_0001_overlay.ppm", "v/item_0001_step0.ppm",
                        "v/item_0001_step9.ppm", "v/item_0001_step19.ppm"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  }
}

TEST_F(Cli, RenderBackgroundMaskIsPlainImage) {
  ASSERT_EQ(invoke("synth --n 1 --size 16 --min-blobs 0 --max-blobs 0 --out s").code, 0);
  ASSERT_EQ(invoke("render --image s/item_0000_image.vslpf --mask s/item_0000_mask.vslpf "
                "--out v").code, 0);
  const std::string ppm = slurp("v/overlay.ppm");
  EXPECT_EQ(ppm.substr(0, 3), "P6\n");
  EXPECT_EQ(ppm.size(), std::string("P6\n16 16\n255\n").size() + 16u * 16u * 3u);
}

}  // namespace
