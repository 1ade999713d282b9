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

// Experiment spec file (JSON).
//
//   {
//     "name": "llama-vs-qwen",
//     "corpus": {"path": "alpaca.jsonl", "dataset_kind": "instruction-following",
//                "sample_size": 500, "seed": 1234},
//     "model_a": {"id": "llama", "backend": "llama", "kind": "post-trained"},
//     "model_b": {"id": "qwen", "backend": "qwen", "kind": "post-trained"},
//     "judges": [{"id": "llama", "backend": "llama", "kind": "post-trained",
//                 "few_shot": false}],
//     "gold_panel": [{"id": "gpt", "backend": "gpt", "kind": "post-trained"}, ...],
//     "style": "original", "rewriter": {"id": ..., "backend": ...},
//     "length_limit_words": 200, "max_tokens": 512, "tie_policy": "half",
//     "reasoning_delimiters": [["<think>", "</think>"]],
//     "backends": [{"id": "llama", "endpoint": "http://localhost:8000/v1",
//                   "model_name": "...", "auth_env": "", "capability": "logprob",
//                   "api": "chat", "max_concurrency": 4, "timeout_s": 120,
//                   "retry": {"max_attempts": 5, "backoff_base_s": 0.5},
//                   "top_logprobs": 20, "option_prefixes": ["", " "]},
//                  {"id": "scripted", "mock": {"kind": "judge", ...}}]
//   }
//
// Relative paths resolve against the spec file's directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/corpus.hpp"
#include "selfpref/errors.hpp"
#include "selfpref/llm/types.hpp"
#include "selfpref/metrics.hpp"
#include "selfpref/protocol/prompts.hpp"
#include "selfpref/protocol/text.hpp"

namespace selfpref::protocol {

struct CorpusRef {
  std::filesystem::path path;
  DatasetKind dataset_kind = DatasetKind::kInstructionFollowing;
  std::size_t sample_size = 500;
  std::uint64_t seed = 1234;
};

struct ModelRef {
  std::string id;
  std::string backend;
  ModelKind kind = ModelKind::kPostTrained;
};

struct JudgeRef {
  std::string id;
  std::string backend;
  ModelKind kind = ModelKind::kPostTrained;
  bool few_shot = false;
};

struct ExperimentSpec {
  std::string name = "experiment";
  CorpusRef corpus;
  ModelRef model_a;
  ModelRef model_b;
  std::vector<JudgeRef> judges;
  std::vector<JudgeRef> gold_panel;
  Style style = Style::kOriginal;
  std::optional<ModelRef> rewriter;
  int length_limit_words = 200;
  int max_tokens = 512;
  int judge_max_tokens = 1;        // logprob judges read only the first token
  int token_judge_max_tokens = 8;  // token-only judges
  metrics::TiePolicy tie_policy = metrics::TiePolicy::kHalfCredit;
  Delimiters reasoning_delimiters = default_reasoning_delimiters();
  // Flag logprob verdicts whose option tokens carry less total mass.
  double low_mass_threshold = 0.5;
  std::map<std::string, llm::BackendConfig> backends;
  std::optional<std::filesystem::path> asset_dir;
  int workers = 4;

  const llm::BackendConfig& backend(const std::string& id) const {
    auto it = backends.find(id);
    if (it == backends.end()) throw ConfigError("unknown backend '" + id + "'");
    return it->second;
  }

  // Throws ConfigError on the first violated rule.
  void validate() const {
    metrics::check_panel_size(gold_panel.size());
    if (corpus.sample_size == 0) throw ConfigError("corpus.sample_size must be at least 1");
    if (length_limit_words < 1 || max_tokens < 1) throw ConfigError("length limits must be positive");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (model_a.id.empty() || model_b.id.empty()) throw ConfigError("model_a and model_b need ids");
    auto check_backend = [&](const std::string& id, const std::string& who) {
      if (!backends.contains(id)) throw ConfigError(who + " references unknown backend '" + id + "'");
    };
    check_backend(model_a.backend, "model_a");
    check_backend(model_b.backend, "model_b");
    std::set<std::string> judge_ids;
    for (const auto& j : judges) {
      check_backend(j.backend, "judge " + j.id);
      if (!judge_ids.insert(j.id).second) throw ConfigError("duplicate judge id '" + j.id + "'");
    }
    std::set<std::string> gold_ids;
    for (const auto& g : gold_panel) {
      check_backend(g.backend, "gold member " + g.id);
      if (!gold_ids.insert(g.id).second) throw ConfigError("duplicate gold member id '" + g.id + "'");
    }
    for (const auto& [id, cfg] : backends) cfg.validate();
    if (style != Style::kOriginal) {
      if (!rewriter) throw ConfigError("style '" + std::string(to_string(style)) + "' needs a rewriter");
      check_backend(rewriter->backend, "rewriter");
      check_rewriter_excluded();
    }
  }

  // A rewriter may not sit on the gold panel, whether named by id or by the
  // same provider model behind a different id.
  void check_rewriter_excluded() const {
    if (!rewriter) return;
    const auto& rw = backend(rewriter->backend);
    for (const auto& g : gold_panel) {
      const auto& gb = backend(g.backend);
      const bool same_model = !rw.mock && !gb.mock && rw.endpoint == gb.endpoint && rw.model_name == gb.model_name;
      if (g.id == rewriter->id || g.backend == rewriter->backend || same_model) {
        throw ConfigError("rewriter '" + rewriter->id + "' must not be a gold panel member (" + g.id + ")");
      }
    }
  }
};

namespace detail {

inline ModelRef model_ref_from_json(const nlohmann::json& j) {
  ModelRef m;
  m.id = j.at("id").get<std::string>();
  m.backend = j.value("backend", m.id);
  m.kind = parse_model_kind(j.value("kind", std::string("post-trained")));
  return m;
}

inline JudgeRef judge_ref_from_json(const nlohmann::json& j) {
  JudgeRef r;
  r.id = j.at("id").get<std::string>();
  r.backend = j.value("backend", r.id);
  r.kind = parse_model_kind(j.value("kind", std::string("post-trained")));
  r.few_shot = j.value("few_shot", false);
  return r;
}

inline nlohmann::json to_json(const ModelRef& m) {
  return {{"id", m.id}, {"backend", m.backend}, {"kind", to_string(m.kind)}};
}

inline nlohmann::json to_json(const JudgeRef& r) {
  return {{"id", r.id}, {"backend", r.backend}, {"kind", to_string(r.kind)}, {"few_shot", r.few_shot}};
}

inline llm::BackendConfig backend_from_json(const nlohmann::json& j) {
  llm::BackendConfig c;
  c.backend_id = j.at("id").get<std::string>();
  if (j.contains("mock")) {
    c.mock = j.at("mock");
    c.endpoint = "mock://" + c.backend_id;
  }
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model_name = j.value("model_name", c.backend_id);
  c.auth_env = j.value("auth_env", std::string());
  c.capability = llm::parse_capability(j.value("capability", std::string("logprob")));
  const auto api = j.value("api", std::string("chat"));
  if (api == "chat") {
    c.api = llm::ApiStyle::kChat;
  } else if (api == "completions") {
    c.api = llm::ApiStyle::kCompletions;
  } else {
    throw ConfigError("backend " + c.backend_id + ": unknown api '" + api + "'");
  }
  c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  if (auto r = j.find("retry"); r != j.end()) {
    c.retry.max_attempts = r->value("max_attempts", c.retry.max_attempts);
    c.retry.backoff_base_s = r->value("backoff_base_s", c.retry.backoff_base_s);
  }
  c.top_logprobs = j.value("top_logprobs", c.top_logprobs);
  if (auto p = j.find("option_prefixes"); p != j.end()) c.option_prefixes = p->get<std::vector<std::string>>();
  return c;
}

}  // namespace detail

inline ExperimentSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    ExperimentSpec s;
    s.name = j.value("name", s.name);
    const auto& c = j.at("corpus");
    s.corpus.path = c.at("path").get<std::string>();
    if (s.corpus.path.is_relative() && !base_dir.empty()) s.corpus.path = base_dir / s.corpus.path;
    s.corpus.dataset_kind = corpus::parse_dataset_kind(c.value("dataset_kind", std::string("instruction-following")));
    s.corpus.sample_size = c.value("sample_size", s.corpus.sample_size);
    s.corpus.seed = c.value("seed", s.corpus.seed);
    s.model_a = detail::model_ref_from_json(j.at("model_a"));
    s.model_b = detail::model_ref_from_json(j.at("model_b"));
    for (const auto& x : j.value("judges", nlohmann::json::array())) s.judges.push_back(detail::judge_ref_from_json(x));
    for (const auto& x : j.at("gold_panel")) s.gold_panel.push_back(detail::judge_ref_from_json(x));
    s.style = parse_style(j.value("style", std::string("original")));
    if (auto r = j.find("rewriter"); r != j.end() && !r->is_null()) s.rewriter = detail::model_ref_from_json(*r);
    s.length_limit_words = j.value("length_limit_words", s.length_limit_words);
    s.max_tokens = j.value("max_tokens", s.max_tokens);
    s.judge_max_tokens = j.value("judge_max_tokens", s.judge_max_tokens);
    s.token_judge_max_tokens = j.value("token_judge_max_tokens", s.token_judge_max_tokens);
    s.tie_policy = metrics::parse_tie_policy(j.value("tie_policy", std::string("half")));
    if (auto d = j.find("reasoning_delimiters"); d != j.end()) {
      s.reasoning_delimiters.clear();
      for (const auto& pair : *d) {
        s.reasoning_delimiters.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
      }
    }
    s.low_mass_threshold = j.value("low_mass_threshold", s.low_mass_threshold);
    for (const auto& b : j.at("backends")) {
      auto cfg = detail::backend_from_json(b);
      const auto id = cfg.backend_id;
      if (!s.backends.emplace(id, std::move(cfg)).second) throw ConfigError("duplicate backend id '" + id + "'");
    }
    if (auto a = j.find("asset_dir"); a != j.end() && !a->is_null()) {
      std::filesystem::path p = a->get<std::string>();
      s.asset_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    s.workers = j.value("workers", s.workers);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open experiment spec: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("experiment spec " + path.string() + ": " + e.what());
  }
  auto spec = spec_from_json(j, path.parent_path());
  spec.validate();
  return spec;
}

}  // namespace selfpref::protocol
