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

// Scores and aggregation rules for pairwise LLM judging.
//
// A pairwise judgment compares two physical responses (Slot::kFirst,
// Slot::kSecond). The judge sees them twice, once in each presentation
// order; Position names where a response sat in one presentation. The
// forward presentation places `forward_a` in position A, the reversed
// presentation places the other response there.
//
// Everything in this header is a pure function of its arguments.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iterator>
#include <map>
#include <ranges>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "selfpref/errors.hpp"

namespace selfpref::metrics {

// Absolute tolerance for every probability comparison (ties, normalization).
inline constexpr double kProbTolerance = 1e-12;

enum class Slot { kFirst, kSecond };
enum class Position { kA, kB };
enum class Outcome { kFirst, kSecond, kTie };
enum class TiePolicy { kHalfCredit, kExclude };

constexpr Slot other(Slot s) noexcept {
  return s == Slot::kFirst ? Slot::kSecond : Slot::kFirst;
}

constexpr Outcome outcome_of(Slot s) noexcept {
  return s == Slot::kFirst ? Outcome::kFirst : Outcome::kSecond;
}

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kFirst: return "first";
    case Outcome::kSecond: return "second";
    case Outcome::kTie: return "tie";
  }
  return "tie";
}

inline std::string_view to_string(TiePolicy p) {
  return p == TiePolicy::kHalfCredit ? "half" : "exclude";
}

inline TiePolicy parse_tie_policy(std::string_view s) {
  if (s == "half" || s == "half-credit") return TiePolicy::kHalfCredit;
  if (s == "exclude" || s == "exclude-from-denominator") return TiePolicy::kExclude;
  throw ConfigError("unknown tie policy: " + std::string(s));
}

inline double sigmoid(double x) {
  if (!std::isfinite(x)) throw DomainError("sigmoid: non-finite input");
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sigmoid_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

// Probabilities of the response in position A and position B for one
// presentation order.
struct ChoiceProbs {
  double p_first = 0.0;
  double p_second = 0.0;
  bool normalized = false;

  bool is_normalized() const noexcept {
    return normalized && p_first >= 0.0 && p_second >= 0.0 &&
           std::abs(p_first + p_second - 1.0) <= kProbTolerance;
  }
};

inline ChoiceProbs normalize_choice_probs(double p_first_raw, double p_second_raw) {
  if (!std::isfinite(p_first_raw) || !std::isfinite(p_second_raw) || p_first_raw < 0.0 ||
      p_second_raw < 0.0) {
    throw ContractError("normalize_choice_probs: inputs must be finite and nonnegative");
  }
  const double total = p_first_raw + p_second_raw;
  if (total <= 0.0) throw DegenerateInputError("normalize_choice_probs: both probabilities are zero");
  ChoiceProbs out;
  out.p_first = p_first_raw / total;
  out.p_second = 1.0 - out.p_first;
  out.normalized = true;
  return out;
}

// Debiased outcome of judging one instruction in both presentation orders.
struct SwappedVerdict {
  std::string instruction_id;
  double avg_first = 0.5;
  double avg_second = 0.5;
  Outcome winner = Outcome::kTie;
  ChoiceProbs forward;
  ChoiceProbs reversed;
  Slot forward_a = Slot::kFirst;

  double avg_prob(Slot s) const noexcept { return s == Slot::kFirst ? avg_first : avg_second; }
};

// Each response's probability averaged over the two presentations; the
// higher average wins, equality within kProbTolerance is a tie.
inline SwappedVerdict swap_average(const ChoiceProbs& forward, const ChoiceProbs& reversed,
                                   Slot forward_a, std::string instruction_id = {}) {
  if (!forward.is_normalized() || !reversed.is_normalized()) {
    throw ContractError("swap_average: both presentations must be normalized");
  }
  // forward_a sits in A going forward and in B once reversed.
  const double lead = (forward.p_first + reversed.p_second) / 2.0;
  const double trail = (forward.p_second + reversed.p_first) / 2.0;

  SwappedVerdict v;
  v.instruction_id = std::move(instruction_id);
  v.forward = forward;
  v.reversed = reversed;
  v.forward_a = forward_a;
  v.avg_first = forward_a == Slot::kFirst ? lead : trail;
  v.avg_second = forward_a == Slot::kFirst ? trail : lead;
  if (std::abs(v.avg_first - v.avg_second) <= kProbTolerance) {
    v.winner = Outcome::kTie;
  } else {
    v.winner = v.avg_first > v.avg_second ? Outcome::kFirst : Outcome::kSecond;
  }
  return v;
}

// Majority verdict of an odd gold panel. Each member casts a hard vote:
// probability 1.0 for the response it picked and 0.0 for the other.
struct GoldVerdict {
  std::string instruction_id;
  std::vector<Slot> member_votes;
  double avg_first = 0.0;
  double avg_second = 0.0;
  Outcome winner = Outcome::kFirst;

  double avg_prob(Slot s) const noexcept { return s == Slot::kFirst ? avg_first : avg_second; }
  double member_vote_prob(std::size_t member, Slot s) const {
    return member_votes.at(member) == s ? 1.0 : 0.0;
  }
};

inline void check_panel_size(std::size_t panel_size) {
  if (panel_size == 0 || panel_size % 2 == 0) {
    throw ConfigError("gold panel size must be odd and at least 1, got " +
                      std::to_string(panel_size));
  }
}

inline GoldVerdict aggregate_gold(std::span<const Slot> votes, std::size_t panel_size,
                                  std::string instruction_id = {}) {
  check_panel_size(panel_size);
  if (votes.size() != panel_size) {
    throw ContractError("aggregate_gold: expected " + std::to_string(panel_size) + " votes, got " +
                        std::to_string(votes.size()));
  }
  GoldVerdict g;
  g.instruction_id = std::move(instruction_id);
  g.member_votes.assign(votes.begin(), votes.end());
  const auto firsts = static_cast<double>(std::ranges::count(votes, Slot::kFirst));
  const auto n = static_cast<double>(panel_size);
  g.avg_first = firsts / n;
  g.avg_second = (n - firsts) / n;
  g.winner = g.avg_first > g.avg_second ? Outcome::kFirst : Outcome::kSecond;
  return g;
}

// Verdict for judges without output probabilities: the option token picked
// in each presentation. Naming different physical responses is a tie.
struct TieModeVerdict {
  std::string instruction_id;
  Position forward_token = Position::kA;
  Position reversed_token = Position::kA;
  Slot forward_a = Slot::kFirst;
  Outcome winner = Outcome::kTie;
};

inline Slot response_at(Position p, Slot position_a) noexcept {
  return p == Position::kA ? position_a : other(position_a);
}

inline TieModeVerdict tie_mode_verdict(Position token_forward, Position token_reversed,
                                       Slot forward_a, std::string instruction_id = {}) {
  TieModeVerdict v;
  v.instruction_id = std::move(instruction_id);
  v.forward_token = token_forward;
  v.reversed_token = token_reversed;
  v.forward_a = forward_a;
  const Slot picked_forward = response_at(token_forward, forward_a);
  const Slot picked_reversed = response_at(token_reversed, other(forward_a));
  v.winner = picked_forward == picked_reversed ? outcome_of(picked_forward) : Outcome::kTie;
  return v;
}

inline Position parse_position_token(std::string_view token) {
  if (token == "A") return Position::kA;
  if (token == "B") return Position::kB;
  throw ParseError("unrecognized option token: '" + std::string(token) + "'");
}

inline TieModeVerdict tie_mode_verdict(std::string_view token_forward,
                                       std::string_view token_reversed, Slot forward_a,
                                       std::string instruction_id = {}) {
  return tie_mode_verdict(parse_position_token(token_forward),
                          parse_position_token(token_reversed), forward_a,
                          std::move(instruction_id));
}

struct WinRateSummary {
  std::string judge_id;
  std::string target_model_id;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  double win_rate = 0.0;
  TiePolicy tie_policy = TiePolicy::kHalfCredit;

  std::size_t total() const noexcept { return wins + losses + ties; }
  double win_fraction() const { return static_cast<double>(wins) / static_cast<double>(total()); }
  double loss_fraction() const { return static_cast<double>(losses) / static_cast<double>(total()); }
  double tie_fraction() const { return static_cast<double>(ties) / static_cast<double>(total()); }
};

inline double rate_from_counts(std::size_t wins, std::size_t losses, std::size_t ties,
                               TiePolicy policy) {
  if (wins + losses + ties == 0) throw ContractError("win_rate: no verdicts");
  if (policy == TiePolicy::kHalfCredit) {
    return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
           static_cast<double>(wins + losses + ties);
  }
  if (wins + losses == 0) {
    throw UndefinedRateError("win_rate: every verdict is a tie under the exclude policy");
  }
  return static_cast<double>(wins) / static_cast<double>(wins + losses);
}

inline WinRateSummary summarize_counts(std::size_t wins, std::size_t losses, std::size_t ties,
                                       TiePolicy policy, std::string judge_id = {},
                                       std::string target_model_id = {}) {
  WinRateSummary s;
  s.judge_id = std::move(judge_id);
  s.target_model_id = std::move(target_model_id);
  s.wins = wins;
  s.losses = losses;
  s.ties = ties;
  s.tie_policy = policy;
  s.win_rate = rate_from_counts(wins, losses, ties, policy);
  return s;
}

// Win rate of `target` over a range of verdicts. `proj` maps an element to
// its Outcome; the default handles ranges of Outcome and of any verdict type
// with a `winner` member.
template <std::ranges::input_range R, typename Proj = std::identity>
WinRateSummary win_rate(const R& verdicts, Slot target, TiePolicy policy,
                        std::string judge_id = {}, std::string target_model_id = {},
                        Proj proj = {}) {
  std::size_t wins = 0, losses = 0, ties = 0;
  for (const auto& v : verdicts) {
    const auto& projected = std::invoke(proj, v);
    Outcome o;
    if constexpr (std::is_same_v<std::remove_cvref_t<decltype(projected)>, Outcome>) {
      o = projected;
    } else {
      o = projected.winner;
    }
    if (o == Outcome::kTie) {
      ++ties;
    } else if (o == outcome_of(target)) {
      ++wins;
    } else {
      ++losses;
    }
  }
  return summarize_counts(wins, losses, ties, policy, std::move(judge_id),
                          std::move(target_model_id));
}

struct DBGResult {
  std::string judge_id;
  std::string own_model_id;
  double w_self_judge = 0.0;
  double w_self_gold = 0.0;
  double dbg = 0.0;
};

// Positive values mean the judge rates its own responses above the gold panel.
inline DBGResult dbg_score(double w_self_judge, double w_self_gold, std::string judge_id = {},
                           std::string own_model_id = {}) {
  auto in_unit = [](double w) { return w >= 0.0 && w <= 1.0; };
  if (!in_unit(w_self_judge) || !in_unit(w_self_gold)) {
    throw ContractError("dbg_score: win rates must lie in [0, 1]");
  }
  return {std::move(judge_id), std::move(own_model_id), w_self_judge, w_self_gold,
          w_self_judge - w_self_gold};
}

// Instruction id -> winner label.
using LabelMap = std::map<std::string, std::string>;

inline constexpr std::string_view kTieLabel = "tie";

inline double agreement_rate(const LabelMap& a, const LabelMap& b) {
  std::vector<std::string> only_a, only_b;
  std::ranges::set_difference(a | std::views::keys, b | std::views::keys, std::back_inserter(only_a));
  std::ranges::set_difference(b | std::views::keys, a | std::views::keys, std::back_inserter(only_b));
  if (!only_a.empty() || !only_b.empty()) {
    std::ostringstream msg;
    msg << "agreement_rate: id sets differ;";
    if (!only_a.empty()) {
      msg << " only in first:";
      for (const auto& id : only_a) msg << ' ' << id;
    }
    if (!only_b.empty()) {
      msg << (only_a.empty() ? "" : ";") << " only in second:";
      for (const auto& id : only_b) msg << ' ' << id;
    }
    throw MismatchError(msg.str());
  }
  if (a.empty()) throw UndefinedRateError("agreement_rate: no labels");
  std::size_t same = 0;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->second == ib->second) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(a.size());
}

// Fraction of labels naming `model`; a tie label earns half credit.
inline double label_win_fraction(const LabelMap& labels, std::string_view model) {
  if (labels.empty()) throw UndefinedRateError("label_win_fraction: no labels");
  double credit = 0.0;
  for (const auto& [id, label] : labels) {
    if (label == model) {
      credit += 1.0;
    } else if (label == kTieLabel) {
      credit += 0.5;
    }
  }
  return credit / static_cast<double>(labels.size());
}

}  // namespace selfpref::metrics
