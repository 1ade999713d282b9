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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/errors.hpp"
#include "selfpref/llm/client.hpp"
#include "selfpref/metrics.hpp"
#include "selfpref/protocol/prompts.hpp"

namespace selfpref::protocol {

using metrics::Outcome;
using metrics::Slot;

enum class VerdictMode { kSoft, kTieMode };

// One judge's verdict on one instruction. The forward prompt always carries
// the first response (model_a) in position A.
struct JudgeVerdict {
  std::string instruction_id;
  VerdictMode mode = VerdictMode::kSoft;
  Outcome winner = Outcome::kTie;
  bool valid = true;
  std::string invalid_reason;
  bool low_mass = false;
  std::optional<metrics::SwappedVerdict> soft;
  std::optional<metrics::TieModeVerdict> tie_mode;
  std::string forward_token;
  std::string reversed_token;
};

struct JudgeOptions {
  int max_tokens = 1;
  double low_mass_threshold = 0.5;
  // Gold members: the token each presentation picks gets 1.0, the other 0.0.
  bool hard_votes = false;
};

namespace detail {

inline metrics::ChoiceProbs hard_probs(const llm::ChoiceQueryResult& r, const llm::OptionTokens& options) {
  if (r.option_mass) {
    const double a = r.option_mass->at(options[0]);
    const double b = r.option_mass->at(options[1]);
    if (a == b) return {0.5, 0.5, true};
    return a > b ? metrics::ChoiceProbs{1.0, 0.0, true} : metrics::ChoiceProbs{0.0, 1.0, true};
  }
  return r.chosen_token == options[0] ? metrics::ChoiceProbs{1.0, 0.0, true}
                                      : metrics::ChoiceProbs{0.0, 1.0, true};
}

inline JudgeVerdict invalid_verdict(const std::string& id, VerdictMode mode, std::string reason) {
  JudgeVerdict v;
  v.instruction_id = id;
  v.mode = mode;
  v.valid = false;
  v.invalid_reason = std::move(reason);
  return v;
}

}  // namespace detail

// Two judge calls, one per presentation order. Logprob judges are
// normalized and swap-averaged; token-only judges use the tie-mode rule.
inline JudgeVerdict evaluate_pair(llm::LlmClient& judge, const JudgePromptBundle& bundle,
                                  const JudgeOptions& options = {}) {
  const auto& id = bundle.instruction_id;
  const auto& tokens = bundle.option_tokens;
  const bool logprob = judge.config().capability == llm::Capability::kLogprob;
  const auto mode = logprob || options.hard_votes ? VerdictMode::kSoft : VerdictMode::kTieMode;

  auto request = [&](const Messages& prompt) {
    llm::CompletionRequest r;
    r.messages = prompt;
    r.temperature = 0.0;
    r.max_tokens = options.max_tokens;
    return r;
  };

  llm::ChoiceQueryResult fwd, rev;
  try {
    fwd = judge.choice_logprobs(request(bundle.forward_prompt), tokens);
    rev = judge.choice_logprobs(request(bundle.reversed_prompt), tokens);
  } catch (const ParseError& e) {
    return detail::invalid_verdict(id, mode, std::string("unparseable judge output: ") + e.what());
  }

  if (!logprob) {
    auto tm = metrics::tie_mode_verdict(fwd.chosen_token, rev.chosen_token, Slot::kFirst, id);
    JudgeVerdict v;
    v.instruction_id = id;
    v.forward_token = fwd.chosen_token;
    v.reversed_token = rev.chosen_token;
    if (options.hard_votes) {
      v.mode = VerdictMode::kSoft;
      v.soft = metrics::swap_average(detail::hard_probs(fwd, tokens), detail::hard_probs(rev, tokens),
                                     Slot::kFirst, id);
      v.winner = v.soft->winner;
    } else {
      v.mode = VerdictMode::kTieMode;
      v.winner = tm.winner;
    }
    v.tie_mode = tm;
    return v;
  }

  if (fwd.degenerate && rev.degenerate) {
    return detail::invalid_verdict(id, mode, "no option token in the top logprobs of either order");
  }
  if (fwd.degenerate || rev.degenerate) {
    return detail::invalid_verdict(
        id, mode, std::string("no option token in the top logprobs of the ") + (fwd.degenerate ? "forward" : "reversed") +
                      " order");
  }

  JudgeVerdict v;
  v.instruction_id = id;
  v.mode = VerdictMode::kSoft;
  v.forward_token = fwd.chosen_token;
  v.reversed_token = rev.chosen_token;
  const double fwd_total = fwd.option_mass->at(tokens[0]) + fwd.option_mass->at(tokens[1]);
  const double rev_total = rev.option_mass->at(tokens[0]) + rev.option_mass->at(tokens[1]);
  v.low_mass = fwd_total < options.low_mass_threshold || rev_total < options.low_mass_threshold;
  const auto fwd_probs = options.hard_votes
                             ? detail::hard_probs(fwd, tokens)
                             : metrics::normalize_choice_probs(fwd.option_mass->at(tokens[0]), fwd.option_mass->at(tokens[1]));
  const auto rev_probs = options.hard_votes
                             ? detail::hard_probs(rev, tokens)
                             : metrics::normalize_choice_probs(rev.option_mass->at(tokens[0]), rev.option_mass->at(tokens[1]));
  v.soft = metrics::swap_average(fwd_probs, rev_probs, Slot::kFirst, id);
  v.winner = v.soft->winner;
  return v;
}

// Gold verdict for one instruction. Each member contributes a hard vote for
// its winner; invalid or tied members abstain. A winner needs a strict
// majority of the full panel, otherwise the gold verdict is invalid.
struct GoldEntry {
  std::string instruction_id;
  std::vector<std::string> member_ids;
  std::vector<JudgeVerdict> members;
  std::optional<metrics::GoldVerdict> verdict;
  std::string invalid_reason;

  bool valid() const noexcept { return verdict.has_value(); }
};

inline GoldEntry aggregate_gold_entry(std::string instruction_id, std::vector<std::string> member_ids,
                                      std::vector<JudgeVerdict> members) {
  GoldEntry e;
  e.instruction_id = std::move(instruction_id);
  e.member_ids = std::move(member_ids);
  e.members = std::move(members);
  const std::size_t panel = e.members.size();
  metrics::check_panel_size(panel);

  std::vector<Slot> votes;
  for (const auto& m : e.members) {
    if (m.valid && m.winner != Outcome::kTie) votes.push_back(m.winner == Outcome::kFirst ? Slot::kFirst : Slot::kSecond);
  }
  if (votes.size() == panel) {
    e.verdict = metrics::aggregate_gold(votes, panel, e.instruction_id);
    return e;
  }
  const auto firsts = static_cast<std::size_t>(std::ranges::count(votes, Slot::kFirst));
  const auto seconds = votes.size() - firsts;
  const std::size_t majority = panel / 2 + 1;
  if (firsts >= majority || seconds >= majority) {
    metrics::GoldVerdict g;
    g.instruction_id = e.instruction_id;
    g.member_votes = votes;
    g.avg_first = static_cast<double>(firsts) / static_cast<double>(votes.size());
    g.avg_second = static_cast<double>(seconds) / static_cast<double>(votes.size());
    g.winner = firsts >= majority ? Outcome::kFirst : Outcome::kSecond;
    e.verdict = g;
  } else {
    e.invalid_reason = "no strict panel majority: " + std::to_string(panel - votes.size()) + " of " +
                       std::to_string(panel) + " members abstained";
  }
  return e;
}

// --- JSON ----------------------------------------------------------------

inline nlohmann::json to_json(const metrics::ChoiceProbs& p) {
  return {{"p_first", p.p_first}, {"p_second", p.p_second}, {"normalized", p.normalized}};
}

inline metrics::ChoiceProbs choice_probs_from_json(const nlohmann::json& j) {
  return {j.at("p_first").get<double>(), j.at("p_second").get<double>(), j.at("normalized").get<bool>()};
}

inline Outcome parse_outcome(const std::string& s) {
  if (s == "first") return Outcome::kFirst;
  if (s == "second") return Outcome::kSecond;
  if (s == "tie") return Outcome::kTie;
  throw ParseError("unknown outcome '" + s + "'");
}

inline nlohmann::json to_json(const JudgeVerdict& v) {
  nlohmann::json j{{"instruction_id", v.instruction_id},
                   {"mode", v.mode == VerdictMode::kSoft ? "soft" : "tie-mode"},
                   {"winner", metrics::to_string(v.winner)},
                   {"valid", v.valid}};
  if (!v.valid) j["invalid_reason"] = v.invalid_reason;
  if (v.low_mass) j["low_mass"] = true;
  if (!v.forward_token.empty()) j["forward_token"] = v.forward_token;
  if (!v.reversed_token.empty()) j["reversed_token"] = v.reversed_token;
  if (v.soft) {
    j["avg_first"] = v.soft->avg_first;
    j["avg_second"] = v.soft->avg_second;
    j["forward"] = to_json(v.soft->forward);
    j["reversed"] = to_json(v.soft->reversed);
  }
  return j;
}

inline JudgeVerdict judge_verdict_from_json(const nlohmann::json& j) {
  JudgeVerdict v;
  v.instruction_id = j.at("instruction_id").get<std::string>();
  v.mode = j.at("mode").get<std::string>() == "soft" ? VerdictMode::kSoft : VerdictMode::kTieMode;
  v.winner = parse_outcome(j.at("winner").get<std::string>());
  v.valid = j.at("valid").get<bool>();
  v.invalid_reason = j.value("invalid_reason", std::string());
  v.low_mass = j.value("low_mass", false);
  v.forward_token = j.value("forward_token", std::string());
  v.reversed_token = j.value("reversed_token", std::string());
  if (j.contains("avg_first")) {
    metrics::SwappedVerdict s;
    s.instruction_id = v.instruction_id;
    s.avg_first = j.at("avg_first").get<double>();
    s.avg_second = j.at("avg_second").get<double>();
    s.forward = choice_probs_from_json(j.at("forward"));
    s.reversed = choice_probs_from_json(j.at("reversed"));
    s.winner = v.winner;
    v.soft = s;
  }
  if (!v.forward_token.empty() && !v.reversed_token.empty() && v.valid) {
    try {
      v.tie_mode = metrics::tie_mode_verdict(v.forward_token, v.reversed_token, Slot::kFirst, v.instruction_id);
    } catch (const ParseError&) {
    }
  }
  return v;
}

inline nlohmann::json to_json(const GoldEntry& e) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    auto m = to_json(e.members[i]);
    m["member_id"] = e.member_ids.at(i);
    members.push_back(std::move(m));
  }
  nlohmann::json j{{"instruction_id", e.instruction_id}, {"members", std::move(members)}, {"valid", e.valid()}};
  if (e.verdict) {
    j["winner"] = metrics::to_string(e.verdict->winner);
    j["avg_first"] = e.verdict->avg_first;
    j["avg_second"] = e.verdict->avg_second;
  } else {
    j["invalid_reason"] = e.invalid_reason;
  }
  return j;
}

inline GoldEntry gold_entry_from_json(const nlohmann::json& j) {
  std::vector<std::string> ids;
  std::vector<JudgeVerdict> members;
  for (const auto& m : j.at("members")) {
    ids.push_back(m.at("member_id").get<std::string>());
    members.push_back(judge_verdict_from_json(m));
  }
  return aggregate_gold_entry(j.at("instruction_id").get<std::string>(), std::move(ids), std::move(members));
}

}  // namespace selfpref::protocol
