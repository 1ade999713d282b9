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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "selfpref/corpus.hpp"
#include "selfpref/protocol/run.hpp"
#include "selfpref/report.hpp"
#include "selfpref/simulator.hpp"

namespace p = selfpref::protocol;
namespace r = selfpref::report;
namespace sim = selfpref::sim;
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

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::istringstream in(text);
  return selfpref::corpus::detail::parse_csv(in);
}

const p::PairResult& golden_result() {
  static const p::PairResult result = p::run_experiment(p::load_spec(kGoldenDir / "spec.json"));
  return result;
}

}  // namespace

// The golden files were produced by the CLI and checked by hand against
// the scripted mock preferences: alpha-judge favors alpha on 7 of 10, the
// panel splits 5/5, so alpha's gap is 0.2; beta-judge favors beta on 6 of
// 10 for a gap of 0.1.
TEST(PairReport, MatchesGoldenTable) {
  EXPECT_EQ(r::render_pair_report(golden_result(), r::Format::kTable), slurp(kGoldenDir / "report.table.txt"));
}

TEST(PairReport, MatchesGoldenCsv) {
  EXPECT_EQ(r::render_pair_report(golden_result(), r::Format::kCsv), slurp(kGoldenDir / "report.csv"));
}

TEST(PairReport, CsvAndJsonCarrySameNumbers) {
  const auto rows = csv_rows(r::render_pair_report(golden_result(), r::Format::kCsv));
  const auto j = json::parse(r::render_pair_report(golden_result(), r::Format::kJson));
  ASSERT_EQ(rows.size(), j["rows"].size() + 1);
  const auto& header = rows[0];
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& obj = j["rows"][i - 1];
    for (std::size_t c = 0; c < header.size(); ++c) {
      const auto& cell = obj.at(header[c]);
      if (cell.is_null()) {
        EXPECT_TRUE(rows[i][c].empty());
      } else if (cell.is_number_float()) {
        EXPECT_EQ(std::stod(rows[i][c]), cell.get<double>()) << header[c];
      } else if (cell.is_number()) {
        EXPECT_EQ(std::stoull(rows[i][c]), cell.get<std::size_t>());
      } else {
        EXPECT_EQ(rows[i][c], cell.get<std::string>());
      }
    }
  }
}

TEST(PairReport, DbgOnlyOnOwnModelRow) {
  const auto t = r::pair_table(golden_result());
  ASSERT_EQ(t.rows.size(), 6u);
  const std::size_t dbg_col = 7;
  EXPECT_TRUE(std::holds_alternative<double>(t.rows[0][dbg_col]));      // alpha judge, alpha
  EXPECT_TRUE(std::holds_alternative<std::monostate>(t.rows[1][dbg_col]));
  EXPECT_TRUE(std::holds_alternative<std::monostate>(t.rows[2][dbg_col]));
  EXPECT_TRUE(std::holds_alternative<double>(t.rows[3][dbg_col]));      // beta judge, beta
  EXPECT_TRUE(std::holds_alternative<std::monostate>(t.rows[4][dbg_col]));
}

TEST(PairReport, ExcludePolicyTies) {
  auto spec = p::load_spec(kGoldenDir / "spec.json");
  spec.tie_policy = selfpref::metrics::TiePolicy::kExclude;
  const auto result = p::run_experiment(spec);
  const auto text = r::render_pair_report(result, r::Format::kTable);
  EXPECT_NE(text.find("tie policy exclude"), std::string::npos);
  EXPECT_NE(text.find("tie_policy=exclude"), std::string::npos);
  EXPECT_DOUBLE_EQ(result.judges[0].summary_first->win_rate, 0.7);
}

TEST(Render, CsvQuotesAndPercentText) {
  r::ReportTable t;
  t.title = "t";
  t.columns = {{"name"}, {"rate", true}, {"n"}};
  t.rows.push_back({std::string("a,\"b\""), 0.6666666666666666, std::size_t{3}});
  t.rows.push_back({std::string("c"), std::monostate{}, std::size_t{12}});
  t.notes = {"hello"};
  EXPECT_EQ(r::render_csv(t), "name,rate,n\n\"a,\"\"b\"\"\",0.6666666666666666,3\nc,,12\n");
  EXPECT_EQ(r::render_text(t),
            "t\n\n"
            "name    rate   n\n"
            "----------------\n"
            "a,\"b\"  66.7%   3\n"
            "c             12\n"
            "note: hello\n");
  const auto j = json::parse(r::render_json(t));
  EXPECT_TRUE(j["rows"][1]["rate"].is_null());
  EXPECT_EQ(j["notes"][0], "hello");
  EXPECT_THROW(r::parse_format("xml"), selfpref::ConfigError);
}

TEST(Render, Deterministic) {
  const auto a = r::render_pair_report(golden_result(), r::Format::kJson);
  const auto b = r::render_pair_report(p::run_experiment(p::load_spec(kGoldenDir / "spec.json")), r::Format::kJson);
  EXPECT_EQ(a, b);
}

TEST(SimReport, TaylorRelativeErrorGrowsWithBias) {
  const auto world = sim::sample_world(sim::NormalGaps{0.0, 1.0}, 20000, 7);
  const std::vector<double> bs{0.05, 0.1, 0.2, 0.4, 0.8};
  const auto curve = sim::taylor_error_curve(world, bs);
  const auto rows = csv_rows(r::render_sim_report(r::taylor_table(world, curve), r::Format::kCsv));
  ASSERT_EQ(rows.size(), bs.size() + 1);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"b", "dbg_true", "taylor", "relative_error"}));
  double prev = -1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double rel = std::stod(rows[i][3]);
    EXPECT_GT(rel, prev);
    prev = rel;
  }
}

TEST(SimReport, PanelRemainderWithinMonteCarloError) {
  // Symmetric panel biases cancel to first order; the remainder is second
  // order and, with zero-mean gaps, third order.
  const auto world = sim::sample_world(sim::NormalGaps{0.0, 1.0}, 20000, 11);
  const std::vector<double> biases{0.3, -0.3, 0.0};
  const auto s = sim::panel_study(world, biases);
  EXPECT_LT(std::abs(s.remainder), 3 * s.std_error + 1e-3);
  const auto text = r::render_sim_report(r::panel_table(world, biases, s), r::Format::kTable);
  EXPECT_NE(text.find("0.3 -0.3 0"), std::string::npos);
  EXPECT_NE(text.find("normal(0,1)"), std::string::npos);
}

TEST(SimReport, ConsistencyColumns) {
  const auto world = sim::sample_world(sim::PointMassGaps{{-4.0, 4.0}}, 1000, 3);
  const auto c = sim::consistency_check(world, 0.5, 99);
  const auto j = json::parse(r::render_sim_report(r::consistency_table(world, 0.5, c), r::Format::kJson));
  EXPECT_DOUBLE_EQ(j["rows"][0]["thresholded_rate"].get<double>(), 0.5);
  EXPECT_NEAR(j["rows"][0]["w_biased"].get<double>(), 0.5, 0.05);
}
