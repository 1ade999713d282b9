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

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/errors.hpp"

namespace selfpref::llm {

enum class Capability { kLogprob, kTokenOnly };
enum class ApiStyle { kChat, kCompletions };

inline std::string_view to_string(Capability c) {
  return c == Capability::kLogprob ? "logprob" : "token-only";
}

inline Capability parse_capability(std::string_view s) {
  if (s == "logprob") return Capability::kLogprob;
  if (s == "token-only") return Capability::kTokenOnly;
  throw ConfigError("unknown backend capability: " + std::string(s));
}

struct RetryPolicy {
  int max_attempts = 5;
  double backoff_base_s = 0.5;
};

struct BackendConfig {
  std::string backend_id;
  std::string endpoint;    // e.g. https://api.openai.com/v1
  std::string model_name;  // provider model string
  std::string auth_env;    // env var holding the API key; empty = no auth
  Capability capability = Capability::kLogprob;
  ApiStyle api = ApiStyle::kChat;
  int max_concurrency = 4;
  double timeout_s = 120.0;
  RetryPolicy retry;
  int top_logprobs = 20;
  // Surface forms summed into an option token's mass, as prefixes of the
  // bare token ("" = the token itself, " " = its leading-whitespace form).
  std::vector<std::string> option_prefixes{"", " "};
  // Present for scripted mock backends; see llm/mock.hpp.
  std::optional<nlohmann::json> mock;

  void validate() const {
    if (backend_id.empty()) throw ConfigError("backend: empty backend_id");
    if (max_concurrency < 1) throw ConfigError("backend " + backend_id + ": max_concurrency must be >= 1");
    if (retry.max_attempts < 1) throw ConfigError("backend " + backend_id + ": retry.max_attempts must be >= 1");
    if (!mock && endpoint.empty()) throw ConfigError("backend " + backend_id + ": endpoint required");
    if (top_logprobs < 0) throw ConfigError("backend " + backend_id + ": top_logprobs must be >= 0");
  }
};

struct Message {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;

  bool operator==(const Message&) const = default;
};

struct CompletionRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  int want_top_logprobs = 0;
  std::vector<std::string> stop;
};

// Flattened prompt text, used by completion-style endpoints and the mocks.
inline std::string prompt_text(const CompletionRequest& req) {
  std::string out;
  for (std::size_t i = 0; i < req.messages.size(); ++i) {
    if (i) out += "\n\n";
    out += req.messages[i].content;
  }
  return out;
}

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

// Provider output reduced to what the harness needs.
struct RawCompletion {
  std::string text;
  std::vector<TokenLogprob> first_token_top_logprobs;
  Usage usage;
};

inline nlohmann::json to_json(const RawCompletion& r) {
  nlohmann::json top = nlohmann::json::array();
  for (const auto& t : r.first_token_top_logprobs) top.push_back({{"token", t.token}, {"logprob", t.logprob}});
  return {{"text", r.text},
          {"top_logprobs", std::move(top)},
          {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}}};
}

inline RawCompletion raw_completion_from_json(const nlohmann::json& j) {
  RawCompletion r;
  r.text = j.at("text").get<std::string>();
  for (const auto& t : j.value("top_logprobs", nlohmann::json::array())) {
    r.first_token_top_logprobs.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
  }
  if (auto it = j.find("usage"); it != j.end()) {
    r.usage.prompt_tokens = it->value("prompt_tokens", 0L);
    r.usage.completion_tokens = it->value("completion_tokens", 0L);
  }
  return r;
}

struct Completion {
  std::string text;
  Usage usage;
  bool cached = false;
};

struct ChoiceQueryResult {
  // Probability mass per option token; empty for token-only backends.
  std::optional<std::map<std::string, double>> option_mass;
  std::string chosen_token;  // parsed from the text; empty if unparseable
  Usage usage;
  bool cached = false;
  bool degenerate = false;  // logprob backend, no option token in the top-k list
};

}  // namespace selfpref::llm
