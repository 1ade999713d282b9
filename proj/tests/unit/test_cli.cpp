// Copyright 2026 The selfpref Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kGoldenDir = fs::path(SELFPREF_TEST_DATA) / "golden";

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("selfpref_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + SELFPREF_CLI + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string golden_args() const {
    return "--spec \"" + (kGoldenDir / "spec.json").string() + "\" --cache-dir \"" + (dir_ / "cache").string() +
           "\" --run-dir \"" + (dir_ / "run").string() + "\"";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunPrintsGoldenTable) {
  const auto r = run(golden_args() + " run");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(kGoldenDir / "report.table.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "result.json"));
}

TEST_F(Cli, StagewiseMatchesRun) {
  ASSERT_EQ(run(golden_args() + " generate").code, 0);
  ASSERT_EQ(run(golden_args() + " judge").code, 0);
  ASSERT_EQ(run(golden_args() + " gold").code, 0);
  const auto r = run(golden_args() + " --format csv score");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(kGoldenDir / "report.csv"));
  const auto again = run(golden_args() + " --format csv report");
  EXPECT_EQ(again.out, r.out);
}

TEST_F(Cli, OutWritesReportFile) {
  const auto r = run(golden_args() + " --format json --out \"" + (dir_ / "report.json").string() + "\" run");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto j = json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(j["rows"].size(), 6u);
}

TEST_F(Cli, InvalidVerdictsGivePartialExit) {
  auto spec = json::parse(slurp(kGoldenDir / "spec.json"));
  spec["corpus"]["path"] = (kGoldenDir / "corpus.jsonl").string();
  for (auto& b : spec["backends"]) {
    if (b["id"] == "beta-judge") b["mock"] = {{"kind", "fixed"}, {"text", "Sure"}, {"probs", {{"Sure", 1.0}}}};
  }
  std::ofstream(dir_ / "spec.json") << spec.dump(2);
  const auto r = run("--spec \"" + (dir_ / "spec.json").string() + "\" --cache-dir \"\" --run-dir \"" +
                     (dir_ / "run").string() + "\" run");
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.out.find("note:"), std::string::npos);
}

TEST_F(Cli, ErrorsExitOne) {
  auto r = run("--spec \"" + (dir_ / "missing.json").string() + "\" run");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  r = run(golden_args() + " smoke");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--live-smoke"), std::string::npos);
  r = run(golden_args() + " report");  // nothing generated yet
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, SimulateCsv) {
  const auto r = run("--format csv --seed 5 simulate --study taylor --n 2000 --b 0.1,0.5");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, row1, row2, extra;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  EXPECT_EQ(header, "b,dbg_true,taylor,relative_error");
  EXPECT_EQ(row1.rfind("0.1,", 0), 0u);
  EXPECT_EQ(row2.rfind("0.5,", 0), 0u);
  EXPECT_FALSE(std::getline(lines, extra));
  EXPECT_EQ(run("--format csv --seed 5 simulate --study taylor --n 2000 --b 0.1,0.5").out, r.out);
}

TEST_F(Cli, IngestWmt) {
  std::ofstream(dir_ / "wmt.jsonl") << R"({"translation":{"de":"Hallo Welt","en":"Hello world"}})" << '\n'
                                    << R"({"translation":{"de":"Guten Morgen","en":"Good morning"}})" << '\n';
  const auto r = run("ingest --from wmt19 --input \"" + (dir_ / "wmt.jsonl").string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string first;
  std::getline(lines, first);
  const auto j = json::parse(first);
  EXPECT_EQ(j["id"], "wmt19-0");
  EXPECT_EQ(j["dataset_kind"], "translation");
  EXPECT_EQ(j["reference"], "Hello world");
}
