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

// Deterministic scripted backends.
//
// A mock is described by a JSON object with a "kind" field:
//
//   fixed   {"text": "A", "probs": {"A": 1.0, "B": 0.0}}
//   table   {"replies": {"<sha256 of prompt text>": "reply" | {"text", "probs"}},
//            "default": ...}
//   lookup  {"answers": {"<substring of prompt>": "reply"}, "default": "..."}
//           (longest matching substring wins)
//   wrap    {"open": "<Response>", "close": "</Response>", "prefix": "...",
//            "suffix": "..."}  echoes the last delimited span with affixes
//   judge   {"scores": {"<response text>": score}, "default_score": 0,
//            "position_bias": 0}
//           reads the last "<Response A>...</Response A>" and B pair (or the
//           "English" variant) and answers A with probability
//           sigmoid(score(A) - score(B) + position_bias)
//
// Every kind accepts "delay_ms" to hold each call open, which the
// concurrency tests use together with the in-flight counters.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "selfpref/errors.hpp"
#include "selfpref/llm/cache.hpp"
#include "selfpref/llm/client.hpp"
#include "selfpref/metrics.hpp"

namespace selfpref::llm {

// Reply with explicit per-token probabilities at the first position.
inline RawCompletion scripted_reply(std::string text, const std::map<std::string, double>& probs = {}) {
  RawCompletion r;
  r.text = std::move(text);
  for (const auto& [token, p] : probs) {
    if (p > 0.0) r.first_token_top_logprobs.push_back({token, std::log(p)});
  }
  std::ranges::sort(r.first_token_top_logprobs,
                    [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
  return r;
}

// Text between the last `open` and the following `close`, if any.
inline std::optional<std::string> last_delimited(std::string_view text, std::string_view open,
                                                 std::string_view close) {
  const auto start = text.rfind(open);
  if (start == std::string_view::npos) return std::nullopt;
  const auto body = start + open.size();
  const auto end = text.find(close, body);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(body, end - body));
}

class MockTransport : public Transport {
 public:
  using Script = std::function<RawCompletion(const CompletionRequest&)>;

  MockTransport(std::string name, Script script, int delay_ms = 0)
      : name_(std::move(name)), script_(std::move(script)), delay_ms_(delay_ms) {}

  static std::shared_ptr<MockTransport> from_json(const std::string& name, const nlohmann::json& spec) {
    try {
      return std::make_shared<MockTransport>(name, script_from_json(spec), spec.value("delay_ms", 0));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("mock backend " + name + ": " + e.what());
    }
  }

  RawCompletion send(const CompletionRequest& request) override {
    ++calls_;
    const auto now = ++in_flight_;
    auto seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { --n; }
    } leave{in_flight_};
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    return script_(request);
  }

  std::string endpoint() const override { return "mock://" + name_; }

  std::size_t calls() const noexcept { return calls_.load(); }
  int max_in_flight() const noexcept { return max_in_flight_.load(); }

  static Script script_from_json(const nlohmann::json& spec) {
    const auto kind = spec.at("kind").get<std::string>();
    if (kind == "fixed") {
      auto reply = reply_from_json(spec);
      return [reply](const CompletionRequest&) { return reply; };
    }
    if (kind == "table") {
      std::map<std::string, RawCompletion> table;
      for (const auto& [hash, v] : spec.at("replies").items()) table.emplace(hash, reply_from_json(v));
      std::optional<RawCompletion> fallback;
      if (spec.contains("default")) fallback = reply_from_json(spec.at("default"));
      return [table = std::move(table), fallback](const CompletionRequest& req) {
        const auto hash = sha256_hex(prompt_text(req));
        if (auto it = table.find(hash); it != table.end()) return it->second;
        if (fallback) return *fallback;
        throw ConfigError("mock table: no reply scripted for prompt hash " + hash);
      };
    }
    if (kind == "lookup") {
      std::vector<std::pair<std::string, std::string>> answers;
      for (const auto& [needle, reply] : spec.at("answers").items()) answers.emplace_back(needle, reply.get<std::string>());
      std::ranges::stable_sort(answers, [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
      std::optional<std::string> fallback;
      if (spec.contains("default")) fallback = spec.at("default").get<std::string>();
      return [answers = std::move(answers), fallback](const CompletionRequest& req) {
        const auto text = prompt_text(req);
        for (const auto& [needle, reply] : answers) {
          if (text.find(needle) != std::string::npos) return scripted_reply(reply);
        }
        if (fallback) return scripted_reply(*fallback);
        throw ConfigError("mock lookup: no scripted answer matches the prompt");
      };
    }
    if (kind == "wrap") {
      const auto open = spec.value("open", std::string("<Response>"));
      const auto close = spec.value("close", std::string("</Response>"));
      const auto prefix = spec.value("prefix", std::string());
      const auto suffix = spec.value("suffix", std::string());
      return [=](const CompletionRequest& req) {
        auto body = last_delimited(prompt_text(req), open, close);
        if (!body) throw ConfigError("mock wrap: delimiters not found in prompt");
        return scripted_reply(prefix + *body + suffix);
      };
    }
    if (kind == "judge") {
      std::map<std::string, double> scores;
      const auto score_table = spec.value("scores", nlohmann::json::object());
      for (const auto& [text, score] : score_table.items()) {
        scores.emplace(text, score.get<double>());
      }
      const double default_score = spec.value("default_score", 0.0);
      const double position_bias = spec.value("position_bias", 0.0);
      return [scores = std::move(scores), default_score, position_bias](const CompletionRequest& req) {
        const auto text = prompt_text(req);
        auto a = last_delimited(text, "<Response A>", "</Response A>");
        auto b = last_delimited(text, "<Response B>", "</Response B>");
        if (!a || !b) {
          a = last_delimited(text, "<English A>", "</English A>");
          b = last_delimited(text, "<English B>", "</English B>");
        }
        if (!a || !b) throw ConfigError("mock judge: no response pair found in prompt");
        auto score = [&](const std::string& r) {
          auto it = scores.find(r);
          return it == scores.end() ? default_score : it->second;
        };
        const double p_a = metrics::sigmoid(score(*a) - score(*b) + position_bias);
        return scripted_reply(p_a >= 0.5 ? "A" : "B", {{"A", p_a}, {"B", 1.0 - p_a}});
      };
    }
    throw ConfigError("unknown mock kind: " + kind);
  }

 private:
  static RawCompletion reply_from_json(const nlohmann::json& v) {
    if (v.is_string()) return scripted_reply(v.get<std::string>());
    std::map<std::string, double> probs;
    const auto prob_table = v.value("probs", nlohmann::json::object());
    for (const auto& [token, p] : prob_table.items()) {
      probs.emplace(token, p.get<double>());
    }
    return scripted_reply(v.value("text", std::string()), probs);
  }

  std::string name_;
  Script script_;
  int delay_ms_ = 0;
  std::atomic<std::size_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

}  // namespace selfpref::llm
