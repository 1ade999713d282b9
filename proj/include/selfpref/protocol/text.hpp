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

#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace selfpref::protocol {

using Delimiters = std::vector<std::pair<std::string, std::string>>;

inline Delimiters default_reasoning_delimiters() { return {{"<think>", "</think>"}}; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct StrippedText {
  std::string text;
  bool flagged = false;  // an opening delimiter was never closed
};

// Removes every delimiter-enclosed reasoning span and trims the result.
// An unclosed opening delimiter drops the rest of the text and flags it.
// A closing delimiter with no opening (templates that pre-fill the opening
// tag) drops everything before it.
inline StrippedText strip_reasoning(std::string_view text,
                                    const Delimiters& delimiters = default_reasoning_delimiters()) {
  StrippedText out;
  std::string kept;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t best_open = std::string_view::npos, best_close = std::string_view::npos;
    const std::pair<std::string, std::string>* open_pair = nullptr;
    const std::pair<std::string, std::string>* close_pair = nullptr;
    for (const auto& d : delimiters) {
      if (d.first.empty() || d.second.empty()) continue;
      if (auto o = text.find(d.first, pos); o < best_open) {
        best_open = o;
        open_pair = &d;
      }
      if (auto c = text.find(d.second, pos); c < best_close) {
        best_close = c;
        close_pair = &d;
      }
    }
    if (best_close < best_open) {
      kept.clear();
      pos = best_close + close_pair->second.size();
      continue;
    }
    if (open_pair == nullptr) {
      kept.append(text.substr(pos));
      break;
    }
    kept.append(text.substr(pos, best_open - pos));
    const auto close = text.find(open_pair->second, best_open + open_pair->first.size());
    if (close == std::string_view::npos) {
      out.flagged = true;
      break;
    }
    pos = close + open_pair->second.size();
  }
  out.text = std::string(trim(kept));
  return out;
}

inline std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace selfpref::protocol
