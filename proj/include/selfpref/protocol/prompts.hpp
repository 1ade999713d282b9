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

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/corpus.hpp"
#include "selfpref/errors.hpp"
#include "selfpref/llm/client.hpp"
#include "selfpref/llm/types.hpp"
#include "selfpref/protocol/templates.hpp"

namespace selfpref::protocol {

using corpus::DatasetKind;
using corpus::InstructionRecord;

// Reasoning models share the post-trained prompts; their reasoning is
// stripped from generated text before judging.
enum class ModelKind { kPreTrained, kPostTrained, kReasoning };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kPreTrained: return "pre-trained";
    case ModelKind::kPostTrained: return "post-trained";
    case ModelKind::kReasoning: return "reasoning";
  }
  return "post-trained";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "pre-trained") return ModelKind::kPreTrained;
  if (s == "post-trained") return ModelKind::kPostTrained;
  if (s == "reasoning") return ModelKind::kReasoning;
  throw ConfigError("unknown model kind: " + std::string(s));
}

enum class Style { kOriginal, kAttractive, kHumorous };

inline std::string_view to_string(Style s) {
  switch (s) {
    case Style::kOriginal: return "original";
    case Style::kAttractive: return "attractive";
    case Style::kHumorous: return "humorous";
  }
  return "original";
}

inline Style parse_style(std::string_view s) {
  if (s == "original") return Style::kOriginal;
  if (s == "attractive") return Style::kAttractive;
  if (s == "humorous") return Style::kHumorous;
  throw ConfigError("unknown style: " + std::string(s));
}

using Messages = std::vector<llm::Message>;

inline const llm::OptionTokens kOptionTokens{"A", "B"};

namespace detail {

// Placeholder stems per dataset: the instruction field and the two response
// fields of the judgment templates.
struct FieldNames {
  std::string instruction;
  std::string answer;
  std::string response_a;
  std::string response_b;
};

inline FieldNames field_names(DatasetKind kind) {
  if (kind == DatasetKind::kTranslation) return {"german", "english", "english_a", "english_b"};
  return {"query", "answer", "response_a", "response_b"};
}

inline std::string prompt_family(ModelKind kind) {
  return kind == ModelKind::kPreTrained ? "pre-trained" : "post-trained";
}

// Fills example_<i>_<field> from the first `slots` few-shot examples.
inline nlohmann::json fill_examples(std::map<std::string, std::string>& values, const nlohmann::json& examples,
                                    std::size_t slots, const std::string& asset) {
  if (examples.size() < slots) {
    throw ConfigError("few-shot asset " + asset + " has " + std::to_string(examples.size()) +
                      " examples, template needs " + std::to_string(slots));
  }
  nlohmann::json used = nlohmann::json::array();
  for (std::size_t i = 0; i < slots; ++i) {
    const auto& ex = examples[i];
    for (const auto& [field, value] : ex.items()) {
      values["example_" + std::to_string(i + 1) + "_" + field] = value.get<std::string>();
    }
    used.push_back(ex);
  }
  return used;
}

}  // namespace detail

inline Messages build_generation_prompt(const TemplateStore& store, const InstructionRecord& record,
                                        ModelKind model_kind, DatasetKind dataset_kind,
                                        int length_limit_words = 200) {
  if (record.dataset_kind != dataset_kind) {
    throw ContractError("build_generation_prompt: record " + record.id + " is " +
                        std::string(corpus::to_string(record.dataset_kind)) + ", expected " +
                        std::string(corpus::to_string(dataset_kind)));
  }
  const auto names = detail::field_names(dataset_kind);
  const auto tmpl_name =
      "generation/" + std::string(corpus::to_string(dataset_kind)) + "." + detail::prompt_family(model_kind);
  const auto& tmpl = store.get_template(tmpl_name);

  std::map<std::string, std::string> values{{"length_limit", std::to_string(length_limit_words)}};
  if (model_kind == ModelKind::kPreTrained) {
    const auto asset = "generation." + std::string(corpus::to_string(dataset_kind));
    detail::fill_examples(values, store.get_examples(asset), example_slots(tmpl), asset);
    values["test_" + names.instruction] = record.instruction;
  } else {
    values[names.instruction] = record.instruction;
  }
  return {{"user", render(tmpl, values)}};
}

// Stop sequences that end a pre-trained model's answer at the next block.
inline std::vector<std::string> generation_stops(ModelKind model_kind, DatasetKind dataset_kind) {
  if (model_kind != ModelKind::kPreTrained) return {};
  if (dataset_kind == DatasetKind::kTranslation) return {"\n# German", "\n\n"};
  return {"\n# Query"};
}

struct JudgePromptBundle {
  DatasetKind dataset_kind = DatasetKind::kInstructionFollowing;
  ModelKind judge_kind = ModelKind::kPostTrained;
  std::string instruction_id;
  Messages forward_prompt;   // response_x in position A
  Messages reversed_prompt;  // response_y in position A
  llm::OptionTokens option_tokens = kOptionTokens;
  nlohmann::json few_shot_examples = nlohmann::json::array();
  std::string template_name;
};

// Pre-trained judges always see the few-shot template; post-trained judges
// see it only when `few_shot` is set.
inline JudgePromptBundle build_judge_prompts(const TemplateStore& store, const InstructionRecord& record,
                                             std::string_view response_x, std::string_view response_y,
                                             ModelKind judge_kind, DatasetKind dataset_kind,
                                             bool few_shot = false) {
  if (response_x.empty() || response_y.empty()) {
    throw ContractError("build_judge_prompts: empty response for instruction " + record.id);
  }
  if (record.dataset_kind != dataset_kind) {
    throw ContractError("build_judge_prompts: dataset kind mismatch for instruction " + record.id);
  }
  const bool with_examples = judge_kind == ModelKind::kPreTrained || few_shot;
  const auto names = detail::field_names(dataset_kind);

  JudgePromptBundle bundle;
  bundle.dataset_kind = dataset_kind;
  bundle.judge_kind = judge_kind;
  bundle.instruction_id = record.id;
  bundle.template_name = "judgment/" + std::string(corpus::to_string(dataset_kind)) + "." +
                         (with_examples ? "pre-trained" : "post-trained");
  const auto& tmpl = store.get_template(bundle.template_name);

  std::map<std::string, std::string> values;
  std::string prefix;
  if (with_examples) {
    const auto asset = "judgment." + std::string(corpus::to_string(dataset_kind));
    bundle.few_shot_examples = detail::fill_examples(values, store.get_examples(asset), example_slots(tmpl), asset);
    prefix = "test_";
  }
  values[prefix + names.instruction] = record.instruction;

  auto with_order = [&](std::string_view a, std::string_view b) {
    values[prefix + names.response_a] = std::string(a);
    values[prefix + names.response_b] = std::string(b);
    return Messages{{"user", render(tmpl, values)}};
  };
  bundle.forward_prompt = with_order(response_x, response_y);
  bundle.reversed_prompt = with_order(response_y, response_x);
  return bundle;
}

inline Messages build_style_prompt(const TemplateStore& store, Style style, std::string_view response,
                                   int length_limit_words = 200) {
  if (style == Style::kOriginal) throw ContractError("build_style_prompt: original style needs no rewrite");
  const auto& tmpl = store.get_template("style/" + std::string(to_string(style)));
  return {{"user", render(tmpl, {{"response", std::string(response)},
                                 {"length_limit", std::to_string(length_limit_words)}})}};
}

}  // namespace selfpref::protocol
