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

// OpenAI-compatible HTTP transport (chat/completions and completions).

#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "selfpref/errors.hpp"
#include "selfpref/llm/client.hpp"
#include "selfpref/llm/types.hpp"

namespace selfpref::llm {

struct ParsedEndpoint {
  std::string scheme_host_port;  // e.g. https://api.example.com:443
  std::string base_path;         // e.g. /v1 (no trailing slash)
};

inline ParsedEndpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint lacks a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedEndpoint p;
  p.scheme_host_port = url.substr(0, path_start);
  p.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!p.base_path.empty() && p.base_path.back() == '/') p.base_path.pop_back();
  return p;
}

inline nlohmann::json build_wire_request(const CompletionRequest& req, ApiStyle api) {
  nlohmann::json body{{"model", req.model}, {"temperature", req.temperature}, {"max_tokens", req.max_tokens}};
  if (api == ApiStyle::kChat) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = std::move(messages);
    if (req.want_top_logprobs > 0) {
      body["logprobs"] = true;
      body["top_logprobs"] = req.want_top_logprobs;
    }
  } else {
    body["prompt"] = prompt_text(req);
    if (req.want_top_logprobs > 0) body["logprobs"] = req.want_top_logprobs;
  }
  if (!req.stop.empty()) body["stop"] = req.stop;
  return body;
}

namespace detail {

inline RawCompletion parse_wire_response_unchecked(const nlohmann::json& body, ApiStyle api) {
  RawCompletion r;
  const auto& choices = body.at("choices");
  if (!choices.is_array() || choices.empty()) throw ParseError("provider response has no choices");
  const auto& choice = choices.at(0);
  if (api == ApiStyle::kChat) {
    const auto& content = choice.at("message").at("content");
    r.text = content.is_string() ? content.get<std::string>() : "";
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (auto c = lp->find("content"); c != lp->end() && c->is_array() && !c->empty()) {
        for (const auto& t : c->at(0).value("top_logprobs", nlohmann::json::array())) {
          r.first_token_top_logprobs.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        }
      }
    }
  } else {
    r.text = choice.value("text", std::string());
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (auto top = lp->find("top_logprobs"); top != lp->end() && top->is_array() && !top->empty()) {
        for (const auto& [token, logprob] : top->at(0).items()) {
          r.first_token_top_logprobs.push_back({token, logprob.get<double>()});
        }
      }
    }
  }
  if (auto u = body.find("usage"); u != body.end() && u->is_object()) {
    r.usage.prompt_tokens = u->value("prompt_tokens", 0L);
    r.usage.completion_tokens = u->value("completion_tokens", 0L);
  }
  return r;
}

}  // namespace detail

// Reads text and first-token top logprobs from a provider response body.
inline RawCompletion parse_wire_response(const nlohmann::json& body, ApiStyle api) {
  try {
    return detail::parse_wire_response_unchecked(body, api);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("unexpected provider response shape: ") + e.what());
  }
}

class HttpTransport : public Transport {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;

  explicit HttpTransport(BackendConfig config, Sleeper sleeper = default_sleeper())
      : config_(std::move(config)), endpoint_(parse_endpoint(config_.endpoint)), sleeper_(std::move(sleeper)) {
    if (!config_.auth_env.empty()) {
      const char* key = std::getenv(config_.auth_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw ConfigError("backend " + config_.backend_id + ": environment variable " + config_.auth_env +
                          " is not set");
      }
      api_key_ = key;
    }
  }

  std::string endpoint() const override { return config_.endpoint; }

  RawCompletion send(const CompletionRequest& request) override {
    const auto body = build_wire_request(request, config_.api).dump();
    const auto path =
        endpoint_.base_path + (config_.api == ApiStyle::kChat ? "/chat/completions" : "/completions");
    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
      if (attempt > 1) {
        sleeper_(std::chrono::duration<double>(config_.retry.backoff_base_s * std::pow(2.0, attempt - 2)));
      }
      httplib::Client client(endpoint_.scheme_host_port);
      const auto timeout = std::chrono::duration<double>(config_.timeout_s);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

      auto res = client.Post(path, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) {
        nlohmann::json parsed;
        try {
          parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError("backend " + config_.backend_id + ": malformed response body: " + e.what());
        }
        return parse_wire_response(parsed, config_.api);
      }
      last_error = "HTTP " + std::to_string(res->status) + ": " + provider_message(res->body);
      if (res->status == 429 || res->status >= 500) continue;
      throw PermanentError(res->status, "backend " + config_.backend_id + ": " + last_error);
    }
    throw TransientError("backend " + config_.backend_id + ": retries exhausted after " +
                         std::to_string(config_.retry.max_attempts) + " attempts; last error: " + last_error);
  }

 private:
  static Sleeper default_sleeper() {
    return [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }

  static std::string provider_message(const std::string& body) {
    try {
      auto j = nlohmann::json::parse(body);
      if (j.contains("error")) {
        const auto& e = j["error"];
        if (e.is_object() && e.contains("message")) return e["message"].get<std::string>();
        if (e.is_string()) return e.get<std::string>();
      }
    } catch (const nlohmann::json::exception&) {
    }
    return body.substr(0, 500);
  }

  BackendConfig config_;
  ParsedEndpoint endpoint_;
  Sleeper sleeper_;
  std::string api_key_;
};

}  // namespace selfpref::llm
