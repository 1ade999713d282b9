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

// Report tables. One table model, three renderings: CSV and JSON keep full
// precision (shortest round-trip doubles), the text table shows rates as
// percentages with one decimal.

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/errors.hpp"
#include "selfpref/metrics.hpp"
#include "selfpref/protocol/run.hpp"
#include "selfpref/simulator.hpp"

namespace selfpref::report {

enum class Format { kCsv, kJson, kTable };

inline Format parse_format(std::string_view s) {
  if (s == "csv") return Format::kCsv;
  if (s == "json") return Format::kJson;
  if (s == "table") return Format::kTable;
  throw ConfigError("unknown format '" + std::string(s) + "' (expected csv, json or table)");
}

using Cell = std::variant<std::monostate, std::string, std::size_t, double>;

struct Column {
  std::string name;
  bool percent = false;  // text table renders the value times 100, one decimal
};

struct ReportTable {
  std::string title;
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::string> notes;
};

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("format_double failed");
  return std::string(buf, end);
}

inline std::string format_percent(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f%%", v * 100.0);
  return buf;
}

namespace detail {

inline std::string plain(const Cell& c) {
  struct {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::size_t n) const { return std::to_string(n); }
    std::string operator()(double d) const { return format_double(d); }
  } visitor;
  return std::visit(visitor, c);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

inline std::string text_cell(const Cell& c, const Column& col) {
  if (const auto* d = std::get_if<double>(&c)) {
    if (col.percent) return format_percent(*d);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", *d);
    return buf;
  }
  return plain(c);
}

inline nlohmann::ordered_json json_cell(const Cell& c) {
  struct {
    nlohmann::ordered_json operator()(std::monostate) const { return nullptr; }
    nlohmann::ordered_json operator()(const std::string& s) const { return s; }
    nlohmann::ordered_json operator()(std::size_t n) const { return n; }
    nlohmann::ordered_json operator()(double d) const { return d; }
  } visitor;
  return std::visit(visitor, c);
}

}  // namespace detail

inline std::string render_csv(const ReportTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (i) out += ',';
    out += detail::csv_field(t.columns[i].name);
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += detail::csv_field(detail::plain(row[i]));
    }
    out += '\n';
  }
  return out;
}

inline std::string render_json(const ReportTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < row.size(); ++i) r[t.columns[i].name] = detail::json_cell(row[i]);
    rows.push_back(std::move(r));
  }
  nlohmann::ordered_json j;
  j["title"] = t.title;
  j["rows"] = std::move(rows);
  j["notes"] = t.notes;
  return j.dump(2) + "\n";
}

inline std::string render_text(const ReportTable& t) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width(t.columns.size());
  std::vector<bool> numeric(t.columns.size(), false);
  for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].name.size();
  for (const auto& row : t.rows) {
    auto& out = cells.emplace_back();
    for (std::size_t i = 0; i < row.size(); ++i) {
      out.push_back(detail::text_cell(row[i], t.columns[i]));
      width[i] = std::max(width[i], out.back().size());
      if (std::holds_alternative<double>(row[i]) || std::holds_alternative<std::size_t>(row[i])) numeric[i] = true;
    }
  }
  auto line = [&](const std::vector<std::string>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) s += "  ";
      const auto pad = std::string(width[i] - values[i].size(), ' ');
      s += numeric[i] ? pad + values[i] : values[i] + pad;
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + '\n';
  };
  std::string out;
  if (!t.title.empty()) out += t.title + "\n\n";
  std::vector<std::string> header;
  for (const auto& c : t.columns) header.push_back(c.name);
  out += line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') + '\n';
  for (const auto& r : cells) out += line(r);
  for (const auto& n : t.notes) out += "note: " + n + '\n';
  return out;
}

inline std::string render(const ReportTable& t, Format f) {
  switch (f) {
    case Format::kCsv: return render_csv(t);
    case Format::kJson: return render_json(t);
    case Format::kTable: return render_text(t);
  }
  return render_text(t);
}

// --- pair report ---------------------------------------------------------

// Rows per judge then gold, model_a before model_b. The dbg cell is set on a
// self-judge's own-model row; the source column names the files behind it.
inline ReportTable pair_table(const protocol::PairResult& r) {
  ReportTable t;
  t.title = r.name + ": " + r.model_a.id + " vs " + r.model_b.id + " (" +
            std::string(corpus::to_string(r.dataset_kind)) + ", " + std::to_string(r.instruction_ids.size()) +
            " instructions, tie policy " + std::string(metrics::to_string(r.tie_policy)) + ")";
  t.columns = {{"judge_id"}, {"target_model"}, {"wins"},         {"losses"}, {"ties"},
               {"invalid"},  {"win_rate", true}, {"dbg", true}, {"source"}};
  const auto policy = "tie_policy=" + std::string(metrics::to_string(r.tie_policy));

  std::map<std::string, const protocol::DbgEntry*> dbg_by_judge;
  for (const auto& d : r.dbg) dbg_by_judge.emplace(d.result.judge_id, &d);

  auto add_row = [&](const std::string& judge, const std::string& model,
                     const std::optional<metrics::WinRateSummary>& s, std::size_t invalid, const std::string& file) {
    std::vector<Cell> row{judge, model};
    if (s) {
      row.insert(row.end(), {s->wins, s->losses, s->ties, invalid, s->win_rate});
    } else {
      row.insert(row.end(), {std::monostate{}, std::monostate{}, std::monostate{}, invalid, std::monostate{}});
    }
    std::string source = file + "; " + policy;
    auto d = dbg_by_judge.find(judge);
    if (d != dbg_by_judge.end() && d->second->result.own_model_id == model) {
      row.emplace_back(d->second->result.dbg);
      source += "; dbg vs gold.jsonl over " + std::to_string(d->second->instructions) + " shared ids";
    } else {
      row.emplace_back(std::monostate{});
    }
    row.emplace_back(std::move(source));
    t.rows.push_back(std::move(row));
  };

  for (const auto& j : r.judges) {
    const auto file = "verdicts/" + j.judge_id + ".jsonl";
    add_row(j.judge_id, r.model_a.id, j.summary_first, j.invalid.size(), file);
    add_row(j.judge_id, r.model_b.id, j.summary_second, j.invalid.size(), file);
    if (j.low_mass > 0) {
      t.notes.push_back(j.judge_id + ": " + std::to_string(j.low_mass) + " verdicts with low option-token mass");
    }
  }
  add_row("gold", r.model_a.id, r.gold.summary_first, r.gold.invalid.size(), "gold.jsonl");
  add_row("gold", r.model_b.id, r.gold.summary_second, r.gold.invalid.size(), "gold.jsonl");
  t.notes.insert(t.notes.end(), r.notes.begin(), r.notes.end());
  return t;
}

inline std::string render_pair_report(const protocol::PairResult& r, Format f) { return render(pair_table(r), f); }

// --- agreement -----------------------------------------------------------

inline ReportTable agreement_table(const metrics::LabelMap& gold, const metrics::LabelMap& human,
                                   const std::string& model) {
  ReportTable t;
  t.title = "gold vs human agreement (" + std::to_string(gold.size()) + " instructions)";
  t.columns = {{"measure"}, {"model"}, {"value", true}, {"source"}};
  t.rows.push_back({std::string("gold_win_fraction"), model, metrics::label_win_fraction(gold, model),
                    std::string("gold.jsonl")});
  t.rows.push_back({std::string("human_win_fraction"), model, metrics::label_win_fraction(human, model),
                    std::string("annotations")});
  t.rows.push_back({std::string("agreement_rate"), std::string(), metrics::agreement_rate(gold, human),
                    std::string("gold.jsonl; annotations")});
  return t;
}

// --- simulator reports ---------------------------------------------------

inline ReportTable taylor_table(const sim::SimWorld& world, std::span<const sim::TaylorPoint> curve) {
  ReportTable t;
  t.title = "taylor error curve, " + sim::describe(world.distribution) + ", n=" + std::to_string(world.n()) +
            ", seed=" + std::to_string(world.seed);
  t.columns = {{"b"}, {"dbg_true"}, {"taylor"}, {"relative_error"}};
  for (const auto& p : curve) {
    Cell rel = p.relative_error ? Cell(*p.relative_error) : Cell(std::monostate{});
    t.rows.push_back({p.b, p.dbg_true, p.taylor, rel});
  }
  return t;
}

inline ReportTable panel_table(const sim::SimWorld& world, std::span<const double> biases,
                               const sim::PanelStudy& s) {
  ReportTable t;
  t.title = "gold panel study, " + sim::describe(world.distribution) + ", n=" + std::to_string(world.n()) +
            ", seed=" + std::to_string(world.seed);
  t.columns = {{"panel_biases"}, {"panel_rate"}, {"remainder"}, {"mc_error"}};
  std::string panel;
  for (std::size_t i = 0; i < biases.size(); ++i) {
    if (i) panel += ' ';
    panel += format_double(biases[i]);
  }
  t.rows.push_back({panel, s.panel_rate, s.remainder, s.std_error});
  return t;
}

inline ReportTable consistency_table(const sim::SimWorld& world, double b, const sim::ConsistencyReport& c) {
  ReportTable t;
  t.title = "thresholded vs continuous, " + sim::describe(world.distribution) + ", n=" + std::to_string(world.n()) +
            ", seed=" + std::to_string(world.seed);
  t.columns = {{"b"}, {"w_biased"}, {"thresholded_rate"}, {"bernoulli_rate"}, {"polarization"}};
  t.rows.push_back({b, c.w_biased, c.thresholded_rate, c.bernoulli_rate, c.polarization});
  return t;
}

inline std::string render_sim_report(const ReportTable& t, Format f) { return render(t, f); }

}  // namespace selfpref::report
