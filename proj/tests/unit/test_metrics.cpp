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
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "selfpref/errors.hpp"
#include "selfpref/metrics.hpp"

namespace m = selfpref::metrics;
using m::Outcome;
using m::Position;
using m::Slot;

namespace {

// Oracle: logistic function evaluated in long double.
double sigmoid_ld(double x) { return static_cast<double>(1.0L / (1.0L + std::exp(-static_cast<long double>(x)))); }

m::ChoiceProbs probs(double a) { return m::normalize_choice_probs(a, 1.0 - a); }

}  // namespace

TEST(Sigmoid, MatchesLongDoubleOracle) {
  for (double x = -30.0; x <= 30.0; x += 0.37) {
    EXPECT_NEAR(m::sigmoid(x), sigmoid_ld(x), 1e-15) << x;
  }
  EXPECT_EQ(m::sigmoid(0.0), 0.5);
}

TEST(Sigmoid, ExtremeInputsStayInUnitInterval) {
  EXPECT_EQ(m::sigmoid(800.0), 1.0);
  EXPECT_EQ(m::sigmoid(-800.0), 0.0);
  EXPECT_GT(m::sigmoid(-700.0), 0.0);
}

TEST(Sigmoid, NonFiniteThrows) {
  EXPECT_THROW(m::sigmoid(std::numeric_limits<double>::quiet_NaN()), selfpref::DomainError);
  EXPECT_THROW(m::sigmoid(std::numeric_limits<double>::infinity()), selfpref::DomainError);
}

TEST(Sigmoid, DerivativeMatchesCentralDifference) {
  for (double x : {-4.0, -1.0, 0.0, 0.3, 2.5}) {
    const double h = 1e-5;
    EXPECT_NEAR(m::sigmoid_derivative(x), (sigmoid_ld(x + h) - sigmoid_ld(x - h)) / (2 * h), 1e-9);
  }
  EXPECT_EQ(m::sigmoid_derivative(0.0), 0.25);
}

TEST(Normalize, RenormalizesOverTwoOptions) {
  const auto p = m::normalize_choice_probs(0.6, 0.2);
  EXPECT_DOUBLE_EQ(p.p_first, 0.75);
  EXPECT_DOUBLE_EQ(p.p_second, 0.25);
  EXPECT_TRUE(p.is_normalized());
}

TEST(Normalize, RejectsBadInputs) {
  EXPECT_THROW(m::normalize_choice_probs(0.0, 0.0), selfpref::DegenerateInputError);
  EXPECT_THROW(m::normalize_choice_probs(-0.1, 0.5), selfpref::ContractError);
  EXPECT_THROW(m::normalize_choice_probs(std::nan(""), 0.5), selfpref::ContractError);
}

TEST(SwapAverage, AveragesEachPhysicalResponseAcrossOrders) {
  // first in A: 0.8 for A; reversed, second in A: 0.7 for A.
  const auto v = m::swap_average(probs(0.8), probs(0.7), Slot::kFirst, "x");
  EXPECT_DOUBLE_EQ(v.avg_first, (0.8 + 0.3) / 2);
  EXPECT_DOUBLE_EQ(v.avg_second, (0.2 + 0.7) / 2);
  EXPECT_EQ(v.winner, Outcome::kFirst);
  EXPECT_EQ(v.instruction_id, "x");
}

TEST(SwapAverage, PurePositionBiasIsATie) {
  const auto v = m::swap_average(probs(0.9), probs(0.9), Slot::kFirst);
  EXPECT_EQ(v.winner, Outcome::kTie);
  EXPECT_NEAR(v.avg_first, 0.5, 1e-15);
}

TEST(SwapAverage, ForwardSlotSecondMirrors) {
  const auto a = m::swap_average(probs(0.8), probs(0.7), Slot::kFirst);
  const auto b = m::swap_average(probs(0.8), probs(0.7), Slot::kSecond);
  EXPECT_DOUBLE_EQ(a.avg_first, b.avg_second);
  EXPECT_DOUBLE_EQ(a.avg_second, b.avg_first);
  EXPECT_EQ(b.winner, Outcome::kSecond);
}

TEST(SwapAverage, RandomizedAgainstDirectFormula) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double f = u(rng), r = u(rng);
    const auto v = m::swap_average(probs(f), probs(r), Slot::kFirst);
    // Oracle: first response's probability is f going forward and 1-r reversed.
    const double first = (f + (1.0 - r)) / 2, second = ((1.0 - f) + r) / 2;
    EXPECT_NEAR(v.avg_first + v.avg_second, 1.0, 1e-12);
    const Outcome expect = std::abs(first - second) <= 1e-12 ? Outcome::kTie
                           : first > second                  ? Outcome::kFirst
                                                             : Outcome::kSecond;
    EXPECT_EQ(v.winner, expect);
  }
}

TEST(SwapAverage, RejectsUnnormalizedInput) {
  EXPECT_THROW(m::swap_average({0.6, 0.2, true}, probs(0.5), Slot::kFirst), selfpref::ContractError);
  EXPECT_THROW(m::swap_average({0.5, 0.5, false}, probs(0.5), Slot::kFirst), selfpref::ContractError);
}

TEST(Gold, MajorityOfThree) {
  const std::vector<Slot> votes{Slot::kFirst, Slot::kSecond, Slot::kFirst};
  const auto g = m::aggregate_gold(votes, 3, "q");
  EXPECT_EQ(g.winner, Outcome::kFirst);
  EXPECT_DOUBLE_EQ(g.avg_first, 2.0 / 3.0);
  EXPECT_EQ(g.member_vote_prob(1, Slot::kSecond), 1.0);
}

TEST(Gold, PanelSizeRules) {
  const std::vector<Slot> two{Slot::kFirst, Slot::kSecond};
  EXPECT_THROW(m::aggregate_gold(two, 2), selfpref::ConfigError);
  EXPECT_THROW(m::check_panel_size(0), selfpref::ConfigError);
  const std::vector<Slot> one{Slot::kSecond};
  EXPECT_THROW(m::aggregate_gold(one, 3), selfpref::ContractError);
  EXPECT_EQ(m::aggregate_gold(one, 1).winner, Outcome::kSecond);
}

TEST(Gold, ExhaustiveFivePanel) {
  for (int mask = 0; mask < 32; ++mask) {
    std::vector<Slot> votes;
    int firsts = 0;
    for (int k = 0; k < 5; ++k) {
      const bool first = (mask >> k) & 1;
      firsts += first;
      votes.push_back(first ? Slot::kFirst : Slot::kSecond);
    }
    EXPECT_EQ(m::aggregate_gold(votes, 5).winner, firsts >= 3 ? Outcome::kFirst : Outcome::kSecond);
  }
}

TEST(TieMode, AllFourTokenPatterns) {
  // Forward: first in A. Reversed: second in A.
  EXPECT_EQ(m::tie_mode_verdict("A", "B", Slot::kFirst).winner, Outcome::kFirst);
  EXPECT_EQ(m::tie_mode_verdict("B", "A", Slot::kFirst).winner, Outcome::kSecond);
  EXPECT_EQ(m::tie_mode_verdict("A", "A", Slot::kFirst).winner, Outcome::kTie);
  EXPECT_EQ(m::tie_mode_verdict("B", "B", Slot::kFirst).winner, Outcome::kTie);
  EXPECT_EQ(m::tie_mode_verdict("A", "B", Slot::kSecond).winner, Outcome::kSecond);
}

TEST(TieMode, UnknownTokenIsParseError) {
  EXPECT_THROW(m::tie_mode_verdict("C", "A", Slot::kFirst), selfpref::ParseError);
  EXPECT_THROW(m::parse_position_token("a"), selfpref::ParseError);
}

TEST(WinRate, HalfCreditAndExclude) {
  std::vector<Outcome> v(259, Outcome::kFirst);
  v.insert(v.end(), 9, Outcome::kTie);
  v.insert(v.end(), 232, Outcome::kSecond);
  const auto half = m::win_rate(v, Slot::kFirst, m::TiePolicy::kHalfCredit);
  EXPECT_DOUBLE_EQ(half.win_rate, (259 + 4.5) / 500);
  const auto ex = m::win_rate(v, Slot::kFirst, m::TiePolicy::kExclude);
  EXPECT_DOUBLE_EQ(ex.win_rate, 259.0 / 491.0);
  EXPECT_EQ(ex.ties, 9u);
  const auto other = m::win_rate(v, Slot::kSecond, m::TiePolicy::kHalfCredit);
  EXPECT_NEAR(half.win_rate + other.win_rate, 1.0, 1e-15);
}

TEST(WinRate, ProjectsVerdictStructs) {
  std::vector<m::SwappedVerdict> vs(3);
  vs[0].winner = Outcome::kFirst;
  vs[1].winner = Outcome::kSecond;
  vs[2].winner = Outcome::kFirst;
  EXPECT_DOUBLE_EQ(m::win_rate(vs, Slot::kFirst, m::TiePolicy::kHalfCredit).win_rate, 2.0 / 3.0);
}

TEST(WinRate, UndefinedCases) {
  const std::vector<Outcome> ties(4, Outcome::kTie);
  EXPECT_THROW(m::win_rate(ties, Slot::kFirst, m::TiePolicy::kExclude), selfpref::UndefinedRateError);
  EXPECT_DOUBLE_EQ(m::win_rate(ties, Slot::kFirst, m::TiePolicy::kHalfCredit).win_rate, 0.5);
  EXPECT_THROW(m::rate_from_counts(0, 0, 0, m::TiePolicy::kHalfCredit), selfpref::ContractError);
}

TEST(Dbg, DifferenceAndRange) {
  const auto d = m::dbg_score(0.7, 0.5, "j", "m");
  EXPECT_DOUBLE_EQ(d.dbg, 0.7 - 0.5);
  EXPECT_EQ(d.judge_id, "j");
  EXPECT_THROW(m::dbg_score(1.1, 0.5), selfpref::ContractError);
  EXPECT_THROW(m::dbg_score(0.5, -0.01), selfpref::ContractError);
}

TEST(Agreement, ExactAndMismatch) {
  m::LabelMap a{{"1", "x"}, {"2", "y"}, {"3", "x"}, {"4", "x"}};
  m::LabelMap b{{"1", "x"}, {"2", "x"}, {"3", "x"}, {"4", "tie"}};
  EXPECT_DOUBLE_EQ(m::agreement_rate(a, b), 0.5);
  EXPECT_DOUBLE_EQ(m::label_win_fraction(b, "x"), 3.5 / 4);
  m::LabelMap c{{"1", "x"}, {"9", "x"}};
  try {
    m::agreement_rate(a, c);
    FAIL();
  } catch (const selfpref::MismatchError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("2 3 4"), std::string::npos) << what;
    EXPECT_NE(what.find("9"), std::string::npos) << what;
  }
  EXPECT_THROW(m::agreement_rate({}, {}), selfpref::UndefinedRateError);
}

TEST(Parse, TiePolicyNames) {
  EXPECT_EQ(m::parse_tie_policy("half"), m::TiePolicy::kHalfCredit);
  EXPECT_EQ(m::parse_tie_policy("exclude"), m::TiePolicy::kExclude);
  EXPECT_THROW(m::parse_tie_policy("drop"), selfpref::ConfigError);
}
