#include <gtest/gtest.h>

#include <sstream>

#include "spamdam/cli.hpp"
#include "support.hpp"

using namespace spamdam;
using testing_support::read_file;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome call(std::vector<std::string> args) {
  args.insert(args.begin(), "spamdam");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  cli::Environment env;
  env.out = &out;
  env.err = &err;
  const int code = cli::run(int(argv.size()), argv.data(), env);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Presets, CrossSiloResolves) {
  const auto fl = cli::resolve_fl_config("cross-silo", nlohmann::json::object());
  EXPECT_EQ(fl["n_clients"], 20);
  EXPECT_EQ(fl["participation"], 1.0);
  EXPECT_EQ(fl["local"]["lr"], 5e-5);
  EXPECT_EQ(fl["local"]["batch_size"], 32);
  EXPECT_EQ(fl["local"]["epochs"], 2);
}

TEST(Presets, FileOverridesPreset) {
  const auto file = nlohmann::json::parse(R"({"fl": {"n_clients": 7}})");
  const auto fl = cli::resolve_fl_config("cross-silo", file);
  EXPECT_EQ(fl["n_clients"], 7);
  EXPECT_EQ(fl["participation"], 1.0);
  const auto from_file = cli::resolve_fl_config("", nlohmann::json::parse(R"({"fl": {"preset": "cross-silo"}})"));
  EXPECT_EQ(from_file["n_clients"], 20);
  EXPECT_THROW(cli::resolve_fl_config("", nlohmann::json::parse(R"({"fl": {"bogus": 1}})")), std::exception);
}

TEST(Usage, MissingTrainIsExit2) {
  const auto r = call({"train", "--out", "/tmp/none.bin"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--train is required"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Usage, UnknownFlagAndSubcommand) {
  EXPECT_EQ(call({"train", "--bogus"}).code, 2);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({}).code, 2);
}

TEST(Errors, RuntimeFailureIsOneLine) {
  TempDir tmp("cli-err");
  const auto r = call({"train", "--train", tmp.file("missing.jsonl"), "--out", tmp.file("m.bin"),
                       "--report-dir", tmp.file("reports")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Errors, BadConfigKey) {
  TempDir tmp("cli-cfg");
  write_file(tmp.file("c.json"), R"({"trian": {}})");
  const auto r = call({"train", "--config", tmp.file("c.json"), "--train", "x.jsonl", "--out", "y"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("trian"), std::string::npos);
}

TEST(Reproducibility, TrainTwiceSameReport) {
  TempDir tmp("cli-repro");
  ASSERT_EQ(call({"synth", "--kind", "desk", "--n", "300", "--seed", "4", "--out", tmp.file("d.jsonl")}).code, 0);
  for (const char* run : {"a", "b"}) {
    const auto r = call({"train", "--train", tmp.file("d.jsonl"), "--out", tmp.file(std::string(run) + ".bin"),
                         "--epochs", "3", "--seed", "9", "--report-dir", tmp.file("reports"),
                         "--run-id", run});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(read_file(tmp.file("a.bin")), read_file(tmp.file("b.bin")));
  for (const char* f : {"config.json", "table.csv", "table.json"}) {
    const auto a = read_file(tmp.path() / "reports" / "train" / "a" / f);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, read_file(tmp.path() / "reports" / "train" / "b" / f)) << f;
  }
}

TEST(Precedence, FlagBeatsConfigFile) {
  TempDir tmp("cli-prec");
  ASSERT_EQ(call({"synth", "--kind", "separable", "--n", "200", "--seed", "1", "--out", tmp.file("s.jsonl")}).code, 0);
  write_file(tmp.file("c.json"), R"({"train": {"epochs": 4, "lr": 0.1}})");
  const auto r = call({"train", "--config", tmp.file("c.json"), "--epochs", "2", "--train", tmp.file("s.jsonl"),
                       "--out", tmp.file("m.bin"), "--report-dir", tmp.file("r"), "--run-id", "x"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cfg = nlohmann::json::parse(read_file(tmp.path() / "r" / "train" / "x" / "config.json"));
  EXPECT_EQ(cfg["train"]["epochs"], 2);
  EXPECT_EQ(cfg["train"]["lr"], 0.1);
  EXPECT_EQ(cfg["command"], "train");
}

TEST(ReportDir, EnvironmentVariable) {
  TempDir tmp("cli-env");
  ASSERT_EQ(call({"synth", "--kind", "triage", "--n", "200", "--seed", "1", "--out", tmp.file("t.csv")}).code, 0);
  ::setenv("SPAMDAM_REPORT_DIR", tmp.file("envroot").c_str(), 1);
  const auto r = call({"triage", "--train", tmp.file("t.csv"), "--test", tmp.file("t.csv"), "--run-id", "e"});
  ::unsetenv("SPAMDAM_REPORT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "envroot" / "triage" / "e" / "table.csv"));
}

TEST(OcrPost, ImageWithoutDecoderIsAnError) {
  TempDir tmp("cli-ocr");
  write_file(tmp.file("cells.json"), R"([{"text":"hi","left":0,"top":0,"width":5,"height":5,"conf":90}])");
  const auto ok = call({"ocr-post", "--cells", tmp.file("cells.json"), "--report-dir", tmp.file("r"), "--run-id", "o"});
  EXPECT_EQ(ok.code, 0) << ok.err;
  const auto r = call({"ocr-post", "--cells", tmp.file("cells.json"), "--image", tmp.file("x.png"),
                       "--report-dir", tmp.file("r"), "--run-id", "o"});
  EXPECT_EQ(r.code, 2);
}
