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

#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>

#include "selfpref/errors.hpp"
#include "selfpref/llm/cache.hpp"
#include "selfpref/llm/types.hpp"

namespace selfpref::llm {

// One provider round trip. Implementations must be safe to call from
// several threads at once.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual RawCompletion send(const CompletionRequest& request) = 0;
  // Endpoint identity used in cache keys.
  virtual std::string endpoint() const = 0;
};

using OptionTokens = std::array<std::string, 2>;

// Reads the option token a response starts with. Leading whitespace is
// skipped; the token must be followed by the end of text or a
// non-alphanumeric character ("B. Because..." parses, "Both" does not).
inline std::string parse_choice_text(std::string_view text, const OptionTokens& options) {
  std::size_t i = 0;
  while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  const auto rest = text.substr(i);
  for (const auto& opt : options) {
    if (rest.starts_with(opt)) {
      if (rest.size() == opt.size() || !std::isalnum(static_cast<unsigned char>(rest[opt.size()]))) {
        return opt;
      }
    }
  }
  throw ParseError("output does not start with an option token: '" +
                   std::string(rest.substr(0, 40)) + "'");
}

// Sums exp(logprob) over the configured surface forms of each option.
inline std::map<std::string, double> option_mass(const std::vector<TokenLogprob>& top,
                                                 const OptionTokens& options,
                                                 const std::vector<std::string>& prefixes) {
  std::map<std::string, double> mass;
  for (const auto& opt : options) {
    double total = 0.0;
    for (const auto& prefix : prefixes) {
      const std::string surface = prefix + opt;
      for (const auto& t : top) {
        if (t.token == surface) total += std::exp(t.logprob);
      }
    }
    mass[opt] = total;
  }
  return mass;
}

class LlmClient {
 public:
  LlmClient(BackendConfig config, std::shared_ptr<Transport> transport,
            std::shared_ptr<ResponseCache> cache)
      : config_(std::move(config)),
        transport_(std::move(transport)),
        cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
        slots_(config_.max_concurrency) {
    config_.validate();
    if (!transport_) throw ConfigError("backend " + config_.backend_id + ": no transport");
  }

  const BackendConfig& config() const noexcept { return config_; }
  std::size_t network_calls() const noexcept { return network_calls_.load(); }

  Completion complete(CompletionRequest request) {
    auto [raw, cached] = fetch(std::move(request), {});
    return {std::move(raw.text), raw.usage, cached};
  }

  ChoiceQueryResult choice_logprobs(CompletionRequest request, const OptionTokens& options) {
    if (options[0] == options[1]) throw ContractError("choice_logprobs: option tokens must differ");
    const bool want_logprobs = config_.capability == Capability::kLogprob;
    request.want_top_logprobs = want_logprobs ? config_.top_logprobs : 0;
    auto [raw, cached] = fetch(std::move(request), {options[0], options[1]});

    ChoiceQueryResult out;
    out.usage = raw.usage;
    out.cached = cached;
    if (want_logprobs) {
      auto mass = option_mass(raw.first_token_top_logprobs, options, config_.option_prefixes);
      out.degenerate = mass[options[0]] <= 0.0 && mass[options[1]] <= 0.0;
      out.option_mass = std::move(mass);
      try {
        out.chosen_token = parse_choice_text(raw.text, options);
      } catch (const ParseError&) {
      }
    } else {
      out.chosen_token = parse_choice_text(raw.text, options);
    }
    return out;
  }

 private:
  std::pair<RawCompletion, bool> fetch(CompletionRequest request,
                                       const std::vector<std::string>& option_tokens) {
    if (request.model.empty()) request.model = config_.model_name;
    auto canonical = canonical_request(transport_->endpoint(), request, option_tokens);
    const auto key = cache_key(canonical);
    if (auto hit = cache_->get(key)) return {raw_completion_from_json(hit->response), true};

    RawCompletion raw;
    {
      slots_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots_};
      ++network_calls_;
      raw = transport_->send(request);
    }
    cache_->put({key, std::move(canonical), to_json(raw), {}});
    return {std::move(raw), false};
  }

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  std::counting_semaphore<> slots_;
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace selfpref::llm
