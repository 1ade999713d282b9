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

// Prompt template assets and {placeholder} rendering.
//
// Asset layout under the root directory:
//
//   templates/generation/<dataset_kind>.<pre|post>-trained.txt
//   templates/judgment/<dataset_kind>.<pre|post>-trained.txt
//   templates/style/<style>.txt
//   fewshot/<generation|judgment>.<dataset_kind>.json
//
// A placeholder is `{name}` with name in [a-z0-9_]+. Any other brace text is
// copied through untouched.

#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/errors.hpp"

namespace selfpref::protocol {

namespace detail {

inline bool is_placeholder_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
}

// Calls on_text(text) and on_name(name) in document order.
template <typename OnText, typename OnName>
void scan_template(std::string_view tmpl, OnText&& on_text, OnName&& on_name) {
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    std::size_t end = open + 1;
    while (end < tmpl.size() && is_placeholder_char(tmpl[end])) ++end;
    if (end < tmpl.size() && tmpl[end] == '}' && end > open + 1) {
      on_text(tmpl.substr(pos, open - pos));
      on_name(tmpl.substr(open + 1, end - open - 1));
      pos = end + 1;
    } else {
      on_text(tmpl.substr(pos, open + 1 - pos));
      pos = open + 1;
    }
  }
  on_text(tmpl.substr(pos));
}

}  // namespace detail

inline std::set<std::string> placeholders(std::string_view tmpl) {
  std::set<std::string> names;
  detail::scan_template(tmpl, [](std::string_view) {}, [&](std::string_view n) { names.emplace(n); });
  return names;
}

// Single-pass substitution: substituted values are never rescanned.
inline std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::set<std::string> missing;
  detail::scan_template(
      tmpl, [&](std::string_view text) { out += text; },
      [&](std::string_view name) {
        auto it = values.find(std::string(name));
        if (it == values.end()) {
          missing.emplace(name);
        } else {
          out += it->second;
        }
      });
  if (!missing.empty()) {
    std::string msg = "unresolved template placeholders:";
    for (const auto& m : missing) msg += " {" + m + "}";
    throw ConfigError(msg);
  }
  return out;
}

// Highest N among `example_<N>_...` placeholders.
inline std::size_t example_slots(std::string_view tmpl) {
  std::size_t n = 0;
  for (const auto& name : placeholders(tmpl)) {
    if (!name.starts_with("example_")) continue;
    const auto digits_end = name.find('_', 8);
    if (digits_end == std::string::npos) continue;
    n = std::max<std::size_t>(n, std::stoul(name.substr(8, digits_end - 8)));
  }
  return n;
}

inline std::filesystem::path default_asset_dir() {
#ifdef SELFPREF_ASSET_DIR
  return SELFPREF_ASSET_DIR;
#else
  return "assets";
#endif
}

class TemplateStore {
 public:
  explicit TemplateStore(std::filesystem::path root = default_asset_dir()) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }

  // `name` is relative to templates/, e.g. "judgment/truthfulness.post-trained".
  const std::string& get_template(const std::string& name) const {
    std::lock_guard lock(mu_);
    if (auto it = templates_.find(name); it != templates_.end()) return it->second;
    const auto path = root_ / "templates" / (name + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("missing template asset: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return templates_.emplace(name, ss.str()).first->second;
  }

  // `name` is e.g. "judgment.translation"; returns the "examples" array.
  const nlohmann::json& get_examples(const std::string& name) const {
    std::lock_guard lock(mu_);
    if (auto it = examples_.find(name); it != examples_.end()) return it->second;
    const auto path = root_ / "fewshot" / (name + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("missing few-shot asset: " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("malformed few-shot asset " + path.string() + ": " + e.what());
    }
    if (!j.contains("examples") || !j["examples"].is_array()) {
      throw ConfigError("few-shot asset " + path.string() + " lacks an \"examples\" array");
    }
    return examples_.emplace(name, std::move(j["examples"])).first->second;
  }

  // Every template name under templates/, sorted.
  std::vector<std::string> template_names() const {
    std::vector<std::string> names;
    const auto base = root_ / "templates";
    if (!std::filesystem::exists(base)) return names;
    for (const auto& e : std::filesystem::recursive_directory_iterator(base)) {
      if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
      auto rel = std::filesystem::relative(e.path(), base);
      rel.replace_extension();
      names.push_back(rel.generic_string());
    }
    std::ranges::sort(names);
    return names;
  }

 private:
  std::filesystem::path root_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::string> templates_;
  mutable std::map<std::string, nlohmann::json> examples_;
};

}  // namespace selfpref::protocol
