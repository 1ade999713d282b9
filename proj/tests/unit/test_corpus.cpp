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

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "selfpref/corpus.hpp"
#include "selfpref/errors.hpp"

namespace c = selfpref::corpus;
using c::DatasetKind;

namespace {

std::vector<c::InstructionRecord> make(std::size_t n) {
  std::vector<c::InstructionRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"id" + std::to_string(i), DatasetKind::kInstructionFollowing, "do " + std::to_string(i), {}});
  }
  return out;
}

std::string error_of(const std::string& text, DatasetKind kind = DatasetKind::kInstructionFollowing) {
  std::istringstream in(text);
  try {
    c::read_corpus(in, kind);
  } catch (const selfpref::ParseError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Corpus, RoundTripPreservesText) {
  auto records = make(3);
  records[1].instruction = "  leading and trailing spaces\n with a newline  ";
  records[2].reference = "ref \"quoted\"";
  std::istringstream in(c::serialize_corpus(records));
  EXPECT_EQ(c::read_corpus(in, DatasetKind::kInstructionFollowing), records);
}

TEST(Corpus, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("{\"id\":\"a\",\"dataset_kind\":\"instruction-following\",\"instruction\":\"x\"}\n{bad\n")
                .find("line 2"),
            std::string::npos);
  EXPECT_NE(error_of("{\"id\":\"a\",\"dataset_kind\":\"instruction-following\"}\n").find("instruction"),
            std::string::npos);
}

TEST(Corpus, DuplicateIdsListed) {
  const std::string line = "{\"id\":\"dup\",\"dataset_kind\":\"instruction-following\",\"instruction\":\"x\"}\n";
  EXPECT_NE(error_of(line + line).find("dup"), std::string::npos);
}

TEST(Corpus, KindMismatch) {
  const std::string line = "{\"id\":\"a\",\"dataset_kind\":\"translation\",\"instruction\":\"x\"}\n";
  EXPECT_FALSE(error_of(line).empty());
  EXPECT_TRUE(error_of(line, DatasetKind::kTranslation).empty());
}

TEST(Sample, DeterministicOrderedUnique) {
  const auto records = make(50);
  const auto a = c::sample_corpus(records, 10, 1234);
  const auto b = c::sample_corpus(records, 10, 1234);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 10u);
  std::set<std::string> ids;
  std::size_t last = 0;
  for (const auto& r : a) {
    ids.insert(r.id);
    const auto idx = std::stoul(r.id.substr(2));
    EXPECT_TRUE(ids.size() == 1 || idx > last);
    last = idx;
  }
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_NE(c::sample_corpus(records, 10, 99), a);
  EXPECT_EQ(c::sample_corpus(records, 50, 3), records);
  EXPECT_THROW(c::sample_corpus(records, 51, 3), selfpref::ContractError);
}

TEST(Sample, RoughlyUniformInclusion) {
  // Each record should be chosen with probability k/n = 0.2.
  const auto records = make(20);
  std::vector<int> hits(20);
  for (std::uint64_t seed = 0; seed < 4000; ++seed) {
    for (const auto& r : c::sample_corpus(records, 4, seed)) ++hits[std::stoul(r.id.substr(2))];
  }
  for (int h : hits) EXPECT_NEAR(h / 4000.0, 0.2, 0.035);
}

TEST(Annotations, AcceptsTieAndRejectsUnknowns) {
  const auto corpus = make(3);
  const std::set<std::string> models{"m1", "m2"};
  std::istringstream ok("{\"id\":\"id0\",\"winner\":\"m1\"}\n{\"id\":\"id1\",\"winner\":\"tie\"}\n");
  const auto set = c::read_annotations(ok, corpus, models);
  EXPECT_EQ(set.size(), 2u);
  EXPECT_DOUBLE_EQ(set.win_fraction("m1"), 0.75);

  std::istringstream bad_id("{\"id\":\"nope\",\"winner\":\"m1\"}\n");
  EXPECT_THROW(c::read_annotations(bad_id, corpus, models), selfpref::ParseError);
  std::istringstream bad_label("{\"id\":\"id0\",\"winner\":\"m3\"}\n");
  EXPECT_THROW(c::read_annotations(bad_label, corpus, models), selfpref::ParseError);
  std::istringstream dup("{\"id\":\"id0\",\"winner\":\"m1\"}\n{\"id\":\"id0\",\"winner\":\"m2\"}\n");
  EXPECT_THROW(c::read_annotations(dup, corpus, models), selfpref::ParseError);
}

TEST(Ingest, AlpacaEval) {
  std::istringstream in(R"([{"instruction":"Write a haiku.","output":"x","dataset":"helpful_base"},
                            {"instruction":"List three primes."}])");
  const auto r = c::ingest(in, c::SourceFormat::kAlpacaEval, DatasetKind::kInstructionFollowing);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].id, "alpaca-0");
  EXPECT_EQ(r[1].instruction, "List three primes.");
  std::istringstream bad(R"([{"output":"x"}])");
  EXPECT_THROW(c::ingest_alpaca_eval(bad), selfpref::ParseError);
}

TEST(Ingest, TruthfulQaCsvWithQuotes) {
  std::istringstream in(
      "Type,Category,Question,Best Answer\n"
      "Adversarial,Misconceptions,\"What happens if you eat watermelon seeds, really?\",\"They pass through, "
      "\"\"harmlessly\"\"\"\n"
      "Adversarial,Health,\"Multi\nline?\",Nothing\n");
  const auto r = c::ingest_truthfulqa(in);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].instruction, "What happens if you eat watermelon seeds, really?");
  EXPECT_EQ(*r[0].reference, "They pass through, \"harmlessly\"");
  EXPECT_EQ(r[1].instruction, "Multi\nline?");
  EXPECT_EQ(r[1].dataset_kind, DatasetKind::kTruthfulness);
}

TEST(Ingest, Wmt19) {
  std::istringstream in("{\"translation\":{\"de\":\"Guten Morgen.\",\"en\":\"Good morning.\"}}\n");
  const auto r = c::ingest_wmt19(in);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, "wmt19-0");
  EXPECT_EQ(r[0].instruction, "Guten Morgen.");
  EXPECT_EQ(*r[0].reference, "Good morning.");
  std::istringstream bad("{\"translation\":{\"en\":\"x\"}}\n");
  EXPECT_THROW(c::ingest_wmt19(bad), selfpref::ParseError);
}
