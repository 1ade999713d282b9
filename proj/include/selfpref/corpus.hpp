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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/errors.hpp"
#include "selfpref/metrics.hpp"

namespace selfpref::corpus {

enum class DatasetKind { kInstructionFollowing, kTruthfulness, kTranslation };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kInstructionFollowing: return "instruction-following";
    case DatasetKind::kTruthfulness: return "truthfulness";
    case DatasetKind::kTranslation: return "translation";
  }
  return "instruction-following";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
  if (s == "instruction-following") return DatasetKind::kInstructionFollowing;
  if (s == "truthfulness") return DatasetKind::kTruthfulness;
  if (s == "translation") return DatasetKind::kTranslation;
  throw ConfigError("unknown dataset kind: " + std::string(s));
}

// One corpus item. For translation corpora `instruction` holds the source
// (German) text.
struct InstructionRecord {
  std::string id;
  DatasetKind dataset_kind = DatasetKind::kInstructionFollowing;
  std::string instruction;
  std::optional<std::string> reference;

  bool operator==(const InstructionRecord&) const = default;
};

inline nlohmann::json to_json(const InstructionRecord& r) {
  nlohmann::json j{{"id", r.id}, {"dataset_kind", to_string(r.dataset_kind)}, {"instruction", r.instruction}};
  if (r.reference) j["reference"] = *r.reference;
  return j;
}

inline std::string serialize_corpus(const std::vector<InstructionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void write_corpus(const std::filesystem::path& path,
                         const std::vector<InstructionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write corpus: " + path.string());
  out << serialize_corpus(records);
}

namespace detail {

inline std::string line_context(std::size_t line_no) {
  return "line " + std::to_string(line_no) + ": ";
}

inline const std::string& required_string(const nlohmann::json& j, const char* key,
                                          std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ParseError(line_context(line_no) + "missing string field '" + key + "'");
  }
  return it->get_ref<const std::string&>();
}

}  // namespace detail

inline std::vector<InstructionRecord> read_corpus(std::istream& in, DatasetKind expected_kind) {
  std::vector<InstructionRecord> records;
  std::map<std::string, std::size_t> seen;
  std::set<std::string> duplicates;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(detail::line_context(line_no) + e.what());
    }
    if (!j.is_object()) throw ParseError(detail::line_context(line_no) + "record is not an object");

    InstructionRecord r;
    r.id = detail::required_string(j, "id", line_no);
    r.instruction = detail::required_string(j, "instruction", line_no);
    if (r.id.empty()) throw ParseError(detail::line_context(line_no) + "empty id");
    if (r.instruction.empty()) throw ParseError(detail::line_context(line_no) + "empty instruction");
    if (auto it = j.find("dataset_kind"); it != j.end()) {
      if (!it->is_string()) throw ParseError(detail::line_context(line_no) + "dataset_kind is not a string");
      r.dataset_kind = parse_dataset_kind(it->get<std::string>());
      if (r.dataset_kind != expected_kind) {
        throw ParseError(detail::line_context(line_no) + "dataset_kind '" +
                         std::string(to_string(r.dataset_kind)) + "' does not match '" +
                         std::string(to_string(expected_kind)) + "'");
      }
    } else {
      r.dataset_kind = expected_kind;
    }
    if (auto it = j.find("reference"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError(detail::line_context(line_no) + "reference is not a string");
      r.reference = it->get<std::string>();
    }
    if (!seen.emplace(r.id, line_no).second) duplicates.insert(r.id);
    records.push_back(std::move(r));
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate instruction ids:";
    for (const auto& id : duplicates) msg += " " + id;
    throw ParseError(msg);
  }
  return records;
}

inline std::vector<InstructionRecord> load_corpus(const std::filesystem::path& path,
                                                  DatasetKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open corpus: " + path.string());
  return read_corpus(in, kind);
}

// Uniform sample of n records without replacement, in original file order.
inline std::vector<InstructionRecord> sample_corpus(const std::vector<InstructionRecord>& records,
                                                    std::size_t n, std::uint64_t seed) {
  if (n > records.size()) {
    throw ContractError("sample_corpus: requested " + std::to_string(n) + " of " +
                        std::to_string(records.size()) + " records");
  }
  std::vector<InstructionRecord> out;
  out.reserve(n);
  std::mt19937_64 rng(seed);
  // Selection sampling: stable with respect to input order.
  std::sample(records.begin(), records.end(), std::back_inserter(out), n, rng);
  return out;
}

// Winner labels from an external rater; "tie" is accepted as a label.
struct AnnotationSet {
  metrics::LabelMap labels;

  std::size_t size() const noexcept { return labels.size(); }
  double win_fraction(std::string_view model) const {
    return metrics::label_win_fraction(labels, model);
  }
};

inline AnnotationSet read_annotations(std::istream& in,
                                      const std::vector<InstructionRecord>& corpus,
                                      const std::set<std::string>& known_models) {
  std::set<std::string> ids;
  for (const auto& r : corpus) ids.insert(r.id);

  AnnotationSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(detail::line_context(line_no) + e.what());
    }
    if (!j.is_object()) throw ParseError(detail::line_context(line_no) + "record is not an object");
    const auto& id = detail::required_string(j, "id", line_no);
    const auto& winner = detail::required_string(j, "winner", line_no);
    if (!ids.contains(id)) {
      throw ParseError(detail::line_context(line_no) + "unknown instruction id '" + id + "'");
    }
    if (winner != metrics::kTieLabel && !known_models.contains(winner)) {
      throw ParseError(detail::line_context(line_no) + "unknown model label '" + winner + "'");
    }
    if (!set.labels.emplace(id, winner).second) {
      throw ParseError(detail::line_context(line_no) + "duplicate annotation for '" + id + "'");
    }
  }
  return set;
}

inline AnnotationSet load_annotations(const std::filesystem::path& path,
                                      const std::vector<InstructionRecord>& corpus,
                                      const std::set<std::string>& known_models) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open annotations: " + path.string());
  return read_annotations(in, corpus, known_models);
}

// --- ingest adapters -----------------------------------------------------
//
// Native dataset layouts converted to the corpus JSONL schema. Ids are
// assigned from the row index so that re-ingesting the same file yields
// the same ids.

enum class SourceFormat { kJsonl, kAlpacaEval, kTruthfulQa, kWmt19 };

inline SourceFormat parse_source_format(std::string_view s) {
  if (s == "jsonl") return SourceFormat::kJsonl;
  if (s == "alpaca-eval") return SourceFormat::kAlpacaEval;
  if (s == "truthfulqa") return SourceFormat::kTruthfulQa;
  if (s == "wmt19") return SourceFormat::kWmt19;
  throw ConfigError("unknown source format '" + std::string(s) +
                    "' (expected jsonl, alpaca-eval, truthfulqa or wmt19)");
}

inline DatasetKind default_kind(SourceFormat f) {
  switch (f) {
    case SourceFormat::kTruthfulQa: return DatasetKind::kTruthfulness;
    case SourceFormat::kWmt19: return DatasetKind::kTranslation;
    default: return DatasetKind::kInstructionFollowing;
  }
}

namespace detail {

inline std::string indexed_id(std::string_view prefix, std::size_t i) {
  return std::string(prefix) + "-" + std::to_string(i);
}

// RFC 4180 rows: quoted fields may hold commas, doubled quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get(c);
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// AlpacaEval: a JSON array of {"instruction": ..., "output"?: ..., "dataset"?: ...}.
inline std::vector<InstructionRecord> ingest_alpaca_eval(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("alpaca-eval: ") + e.what());
  }
  if (!j.is_array()) throw ParseError("alpaca-eval: expected a JSON array");
  std::vector<InstructionRecord> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& row = j[i];
    if (!row.is_object() || !row.contains("instruction") || !row["instruction"].is_string()) {
      throw ParseError("alpaca-eval: row " + std::to_string(i) + " has no instruction string");
    }
    out.push_back({detail::indexed_id("alpaca", i), DatasetKind::kInstructionFollowing,
                   row["instruction"].get<std::string>(), std::nullopt});
  }
  return out;
}

// TruthfulQA CSV with a header row naming at least "Question"; "Best Answer"
// becomes the reference when present.
inline std::vector<InstructionRecord> ingest_truthfulqa(std::istream& in) {
  const auto rows = detail::parse_csv(in);
  if (rows.empty()) throw ParseError("truthfulqa: empty file");
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto question = column("Question");
  if (!question) throw ParseError("truthfulqa: header has no Question column");
  const auto best = column("Best Answer");
  std::vector<InstructionRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() <= *question) throw ParseError("truthfulqa: row " + std::to_string(r) + " is short");
    InstructionRecord rec{detail::indexed_id("tqa", out.size()), DatasetKind::kTruthfulness, row[*question],
                          std::nullopt};
    if (best && *best < row.size() && !row[*best].empty()) rec.reference = row[*best];
    out.push_back(std::move(rec));
  }
  return out;
}

// WMT19 de-en as JSONL rows {"translation": {"de": ..., "en": ...}}.
inline std::vector<InstructionRecord> ingest_wmt19(std::istream& in) {
  std::vector<InstructionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("wmt19: " + detail::line_context(line_no) + e.what());
    }
    const auto t = j.find("translation");
    if (t == j.end() || !t->is_object() || !t->contains("de") || !(*t)["de"].is_string()) {
      throw ParseError("wmt19: " + detail::line_context(line_no) + "missing translation.de");
    }
    InstructionRecord rec{detail::indexed_id("wmt19", out.size()), DatasetKind::kTranslation,
                          (*t)["de"].get<std::string>(), std::nullopt};
    if (t->contains("en") && (*t)["en"].is_string()) rec.reference = (*t)["en"].get<std::string>();
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<InstructionRecord> ingest(std::istream& in, SourceFormat format, DatasetKind kind) {
  switch (format) {
    case SourceFormat::kJsonl: return read_corpus(in, kind);
    case SourceFormat::kAlpacaEval: return ingest_alpaca_eval(in);
    case SourceFormat::kTruthfulQa: return ingest_truthfulqa(in);
    case SourceFormat::kWmt19: return ingest_wmt19(in);
  }
  throw ContractError("ingest: unknown format");
}

}  // namespace selfpref::corpus
