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

// End-to-end pairwise experiment: sample, generate, (restyle), judge with
// order swap, gold panel, and DBG assembly.
//
// Every backend call goes through the response cache, so a re-run with a
// warm cache makes no network calls and reproduces every file byte for
// byte. Stage outputs in a run directory:
//
//   responses.jsonl          one line per instruction (both responses)
//   verdicts/<judge>.jsonl   one verdict per line, sorted by instruction id
//   gold.jsonl               member verdicts + panel verdict per line
//   result.json              PairResult

#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfpref/corpus.hpp"
#include "selfpref/errors.hpp"
#include "selfpref/llm/cache.hpp"
#include "selfpref/llm/client.hpp"
#include "selfpref/llm/http.hpp"
#include "selfpref/llm/mock.hpp"
#include "selfpref/metrics.hpp"
#include "selfpref/protocol/experiment.hpp"
#include "selfpref/protocol/judging.hpp"
#include "selfpref/protocol/prompts.hpp"
#include "selfpref/protocol/templates.hpp"
#include "selfpref/protocol/text.hpp"

namespace selfpref::protocol {

struct ResponseRecord {
  std::string instruction_id;
  std::string model_id;
  std::string text;           // what the judges see
  std::string raw_text;       // as generated
  std::string original_text;  // after reasoning stripping, before restyling
  Style style = Style::kOriginal;
  bool reasoning_flagged = false;
  std::size_t words = 0;
  bool over_length = false;
};

struct ResponsePair {
  InstructionRecord instruction;
  ResponseRecord first;   // model_a
  ResponseRecord second;  // model_b
};

inline nlohmann::json to_json(const ResponseRecord& r) {
  return {{"instruction_id", r.instruction_id}, {"model_id", r.model_id},
          {"text", r.text},                     {"raw_text", r.raw_text},
          {"original_text", r.original_text},   {"style", to_string(r.style)},
          {"reasoning_flagged", r.reasoning_flagged}, {"words", r.words},
          {"over_length", r.over_length}};
}

inline ResponseRecord response_from_json(const nlohmann::json& j) {
  ResponseRecord r;
  r.instruction_id = j.at("instruction_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.raw_text = j.value("raw_text", r.text);
  r.original_text = j.value("original_text", r.text);
  r.style = parse_style(j.value("style", std::string("original")));
  r.reasoning_flagged = j.value("reasoning_flagged", false);
  r.words = j.value("words", word_count(r.text));
  r.over_length = j.value("over_length", false);
  return r;
}

inline nlohmann::json to_json(const ResponsePair& p) {
  return {{"instruction", corpus::to_json(p.instruction)}, {"first", to_json(p.first)}, {"second", to_json(p.second)}};
}

inline ResponsePair response_pair_from_json(const nlohmann::json& j) {
  ResponsePair p;
  const auto& ins = j.at("instruction");
  p.instruction.id = ins.at("id").get<std::string>();
  p.instruction.dataset_kind = corpus::parse_dataset_kind(ins.at("dataset_kind").get<std::string>());
  p.instruction.instruction = ins.at("instruction").get<std::string>();
  if (ins.contains("reference")) p.instruction.reference = ins.at("reference").get<std::string>();
  p.first = response_from_json(j.at("first"));
  p.second = response_from_json(j.at("second"));
  return p;
}

// --- JSONL helpers -------------------------------------------------------

inline void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    for (const auto& l : lines) out << l.dump() << '\n';
    if (!out) throw ConfigError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::vector<nlohmann::json> lines;
  std::ifstream in(path, std::ios::binary);
  if (!in) return lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      lines.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      // A torn trailing line from an interrupted append is dropped.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return lines;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
// exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, std::min<int>(workers, static_cast<int>(n))));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// Re-throws the active exception with the instruction id prepended,
// keeping the error category.
[[noreturn]] inline void rethrow_with_context(const std::string& instruction_id) {
  const std::string ctx = "instruction " + instruction_id + ": ";
  try {
    throw;
  } catch (const PermanentError& e) {
    throw PermanentError(e.status(), ctx + e.what());
  } catch (const TransientError& e) {
    throw TransientError(ctx + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + e.what());
  } catch (const ParseError& e) {
    throw ParseError(ctx + e.what());
  } catch (const ContractError& e) {
    throw ContractError(ctx + e.what());
  }
}

using TransportFactory = std::function<std::shared_ptr<llm::Transport>(const llm::BackendConfig&)>;

inline std::shared_ptr<llm::Transport> default_transport(const llm::BackendConfig& cfg) {
  if (cfg.mock) return llm::MockTransport::from_json(cfg.backend_id, *cfg.mock);
  return std::make_shared<llm::HttpTransport>(cfg);
}

// --- scoring -------------------------------------------------------------

struct InvalidNote {
  std::string instruction_id;
  std::string reason;
};

struct JudgeSection {
  std::string judge_id;
  ModelKind kind = ModelKind::kPostTrained;
  llm::Capability capability = llm::Capability::kLogprob;
  std::vector<JudgeVerdict> verdicts;
  std::optional<metrics::WinRateSummary> summary_first;
  std::optional<metrics::WinRateSummary> summary_second;
  std::vector<InvalidNote> invalid;
  std::size_t low_mass = 0;
};

struct GoldSection {
  std::vector<std::string> member_ids;
  std::vector<GoldEntry> entries;
  std::optional<metrics::WinRateSummary> summary_first;
  std::optional<metrics::WinRateSummary> summary_second;
  std::vector<InvalidNote> invalid;
};

struct DbgEntry {
  metrics::DBGResult result;
  std::size_t instructions = 0;  // size of the shared valid index set
};

struct PairResult {
  std::string name;
  ModelRef model_a;
  ModelRef model_b;
  DatasetKind dataset_kind = DatasetKind::kInstructionFollowing;
  metrics::TiePolicy tie_policy = metrics::TiePolicy::kHalfCredit;
  std::vector<std::string> instruction_ids;
  std::vector<JudgeSection> judges;
  GoldSection gold;
  std::vector<DbgEntry> dbg;
  std::vector<std::string> notes;

  bool fully_valid() const {
    if (!gold.invalid.empty()) return false;
    return std::ranges::all_of(judges, [](const auto& j) { return j.invalid.empty(); });
  }
};

namespace detail {

inline std::optional<metrics::WinRateSummary> try_win_rate(const std::vector<Outcome>& outcomes, Slot target,
                                                           metrics::TiePolicy policy, const std::string& judge,
                                                           const std::string& model, std::vector<std::string>& notes) {
  if (outcomes.empty()) {
    notes.push_back(judge + " / " + model + ": no valid verdicts");
    return std::nullopt;
  }
  try {
    return metrics::win_rate(outcomes, target, policy, judge, model);
  } catch (const UndefinedRateError& e) {
    notes.push_back(judge + " / " + model + ": " + e.what());
    return std::nullopt;
  }
}

}  // namespace detail

inline PairResult score(const ExperimentSpec& spec, const std::vector<ResponsePair>& pairs,
                        const std::map<std::string, std::vector<JudgeVerdict>>& verdicts_by_judge,
                        const std::vector<GoldEntry>& gold) {
  PairResult r;
  r.name = spec.name;
  r.model_a = spec.model_a;
  r.model_b = spec.model_b;
  r.dataset_kind = spec.corpus.dataset_kind;
  r.tie_policy = spec.tie_policy;
  for (const auto& p : pairs) r.instruction_ids.push_back(p.instruction.id);
  const std::set<std::string> expected(r.instruction_ids.begin(), r.instruction_ids.end());

  auto check_coverage = [&](const std::vector<std::string>& ids, const std::string& who) {
    const std::set<std::string> got(ids.begin(), ids.end());
    if (got != expected || got.size() != ids.size()) {
      throw MismatchError(who + ": verdicts do not cover the instruction set exactly once");
    }
  };

  // Gold.
  r.gold.member_ids.reserve(spec.gold_panel.size());
  for (const auto& g : spec.gold_panel) r.gold.member_ids.push_back(g.id);
  r.gold.entries = gold;
  std::ranges::sort(r.gold.entries, {}, &GoldEntry::instruction_id);
  std::map<std::string, Outcome> gold_by_id;
  {
    std::vector<std::string> ids;
    std::vector<Outcome> outcomes;
    for (const auto& e : r.gold.entries) {
      ids.push_back(e.instruction_id);
      if (e.valid()) {
        outcomes.push_back(e.verdict->winner);
        gold_by_id.emplace(e.instruction_id, e.verdict->winner);
      } else {
        r.gold.invalid.push_back({e.instruction_id, e.invalid_reason});
      }
    }
    check_coverage(ids, "gold");
    r.gold.summary_first =
        detail::try_win_rate(outcomes, Slot::kFirst, spec.tie_policy, "gold", spec.model_a.id, r.notes);
    r.gold.summary_second =
        detail::try_win_rate(outcomes, Slot::kSecond, spec.tie_policy, "gold", spec.model_b.id, r.notes);
  }

  for (const auto& judge : spec.judges) {
    JudgeSection s;
    s.judge_id = judge.id;
    s.kind = judge.kind;
    s.capability = spec.backend(judge.backend).capability;
    auto it = verdicts_by_judge.find(judge.id);
    if (it == verdicts_by_judge.end()) throw MismatchError("no verdicts for judge " + judge.id);
    s.verdicts = it->second;
    std::ranges::sort(s.verdicts, {}, &JudgeVerdict::instruction_id);
    std::vector<std::string> ids;
    std::vector<Outcome> outcomes;
    for (const auto& v : s.verdicts) {
      ids.push_back(v.instruction_id);
      if (v.low_mass) ++s.low_mass;
      if (v.valid) {
        outcomes.push_back(v.winner);
      } else {
        s.invalid.push_back({v.instruction_id, v.invalid_reason});
      }
    }
    check_coverage(ids, "judge " + judge.id);
    s.summary_first = detail::try_win_rate(outcomes, Slot::kFirst, spec.tie_policy, judge.id, spec.model_a.id, r.notes);
    s.summary_second =
        detail::try_win_rate(outcomes, Slot::kSecond, spec.tie_policy, judge.id, spec.model_b.id, r.notes);

    // DBG for judges that generated one side of the pair, over the ids where
    // both the judge and the gold panel produced a valid verdict.
    std::optional<Slot> own;
    std::string own_model;
    if (judge.id == spec.model_a.id) {
      own = Slot::kFirst;
      own_model = spec.model_a.id;
    } else if (judge.id == spec.model_b.id) {
      own = Slot::kSecond;
      own_model = spec.model_b.id;
    }
    if (own) {
      std::vector<Outcome> judge_shared, gold_shared;
      for (const auto& v : s.verdicts) {
        auto g = gold_by_id.find(v.instruction_id);
        if (!v.valid || g == gold_by_id.end()) continue;
        judge_shared.push_back(v.winner);
        gold_shared.push_back(g->second);
      }
      auto w_judge = detail::try_win_rate(judge_shared, *own, spec.tie_policy, judge.id, own_model, r.notes);
      auto w_gold = detail::try_win_rate(gold_shared, *own, spec.tie_policy, "gold", own_model, r.notes);
      if (w_judge && w_gold) {
        r.dbg.push_back({metrics::dbg_score(w_judge->win_rate, w_gold->win_rate, judge.id, own_model),
                         judge_shared.size()});
      } else {
        r.notes.push_back("dbg for " + judge.id + " is undefined");
      }
    }
    r.judges.push_back(std::move(s));
  }
  return r;
}

inline nlohmann::json to_json(const metrics::WinRateSummary& s) {
  return {{"judge_id", s.judge_id}, {"target_model", s.target_model_id}, {"wins", s.wins},
          {"losses", s.losses},     {"ties", s.ties},                    {"win_rate", s.win_rate},
          {"tie_policy", metrics::to_string(s.tie_policy)}};
}

inline nlohmann::json to_json(const PairResult& r) {
  auto summary = [](const std::optional<metrics::WinRateSummary>& s) -> nlohmann::json {
    return s ? to_json(*s) : nlohmann::json(nullptr);
  };
  auto invalid = [](const std::vector<InvalidNote>& notes) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& n : notes) a.push_back({{"instruction_id", n.instruction_id}, {"reason", n.reason}});
    return a;
  };
  nlohmann::json judges = nlohmann::json::array();
  for (const auto& j : r.judges) {
    judges.push_back({{"judge_id", j.judge_id},
                      {"kind", to_string(j.kind)},
                      {"capability", llm::to_string(j.capability)},
                      {"first", summary(j.summary_first)},
                      {"second", summary(j.summary_second)},
                      {"invalid", invalid(j.invalid)},
                      {"low_mass", j.low_mass}});
  }
  nlohmann::json dbg = nlohmann::json::array();
  for (const auto& d : r.dbg) {
    dbg.push_back({{"judge_id", d.result.judge_id},
                   {"own_model", d.result.own_model_id},
                   {"w_self_judge", d.result.w_self_judge},
                   {"w_self_gold", d.result.w_self_gold},
                   {"dbg", d.result.dbg},
                   {"instructions", d.instructions}});
  }
  return {{"name", r.name},
          {"model_a", detail::to_json(r.model_a)},
          {"model_b", detail::to_json(r.model_b)},
          {"dataset_kind", corpus::to_string(r.dataset_kind)},
          {"tie_policy", metrics::to_string(r.tie_policy)},
          {"instructions", r.instruction_ids.size()},
          {"judges", std::move(judges)},
          {"gold",
           {{"members", r.gold.member_ids},
            {"first", summary(r.gold.summary_first)},
            {"second", summary(r.gold.summary_second)},
            {"invalid", invalid(r.gold.invalid)}}},
          {"dbg", std::move(dbg)},
          {"notes", r.notes}};
}

// --- experiment ----------------------------------------------------------

class Experiment {
 public:
  // `cache_dir` empty keeps the cache in memory.
  Experiment(ExperimentSpec spec, std::optional<std::filesystem::path> cache_dir = std::nullopt,
             TransportFactory factory = default_transport)
      : spec_(std::move(spec)), store_(spec_.asset_dir.value_or(default_asset_dir())) {
    spec_.validate();
    cache_ = cache_dir ? std::make_shared<llm::ResponseCache>(*cache_dir / (spec_.name + ".jsonl"))
                       : std::make_shared<llm::ResponseCache>();
    for (const auto& [id, cfg] : spec_.backends) {
      transports_.emplace(id, factory(cfg));
    }
  }

  ~Experiment() {
    try {
      cache_->flush();
    } catch (...) {
    }
  }

  const ExperimentSpec& spec() const noexcept { return spec_; }
  const TemplateStore& store() const noexcept { return store_; }
  llm::ResponseCache& cache() noexcept { return *cache_; }

  llm::LlmClient& client(const std::string& backend_id) {
    std::lock_guard lock(mu_);
    if (auto it = clients_.find(backend_id); it != clients_.end()) return *it->second;
    auto t = transports_.find(backend_id);
    if (t == transports_.end()) throw ConfigError("unknown backend '" + backend_id + "'");
    auto c = std::make_unique<llm::LlmClient>(spec_.backend(backend_id), t->second, cache_);
    return *clients_.emplace(backend_id, std::move(c)).first->second;
  }

  std::shared_ptr<llm::Transport> transport(const std::string& backend_id) const {
    return transports_.at(backend_id);
  }

  std::size_t network_calls() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [id, c] : clients_) n += c->network_calls();
    return n;
  }

  std::vector<InstructionRecord> sample_instructions() const {
    const auto records = corpus::load_corpus(spec_.corpus.path, spec_.corpus.dataset_kind);
    return corpus::sample_corpus(records, spec_.corpus.sample_size, spec_.corpus.seed);
  }

  ResponseRecord generate_one(const ModelRef& model, const InstructionRecord& record) {
    llm::CompletionRequest req;
    req.messages = build_generation_prompt(store_, record, model.kind, spec_.corpus.dataset_kind,
                                           spec_.length_limit_words);
    req.max_tokens = spec_.max_tokens;
    req.stop = generation_stops(model.kind, spec_.corpus.dataset_kind);
    ResponseRecord r;
    r.instruction_id = record.id;
    r.model_id = model.id;
    r.raw_text = client(model.backend).complete(std::move(req)).text;
    if (model.kind == ModelKind::kReasoning) {
      auto stripped = strip_reasoning(r.raw_text, spec_.reasoning_delimiters);
      r.original_text = std::move(stripped.text);
      r.reasoning_flagged = stripped.flagged;
    } else {
      r.original_text = std::string(trim(r.raw_text));
    }
    r.text = r.original_text;
    r.words = word_count(r.text);
    r.over_length = r.words > static_cast<std::size_t>(spec_.length_limit_words);
    return r;
  }

  std::vector<ResponsePair> generate(const std::vector<InstructionRecord>& instructions) {
    std::vector<ResponsePair> pairs(instructions.size());
    parallel_for(instructions.size(), spec_.workers, [&](std::size_t i) {
      try {
        pairs[i].instruction = instructions[i];
        pairs[i].first = generate_one(spec_.model_a, instructions[i]);
        pairs[i].second = generate_one(spec_.model_b, instructions[i]);
      } catch (...) {
        rethrow_with_context(instructions[i].id);
      }
    });
    if (spec_.style != Style::kOriginal) pairs = style_rewrite(std::move(pairs));
    return pairs;
  }

  // Rewrites both models' responses with the same style prompt. Originals
  // stay in `original_text`; instruction pairing is preserved.
  std::vector<ResponsePair> style_rewrite(std::vector<ResponsePair> pairs) {
    if (spec_.style == Style::kOriginal) return pairs;
    if (!spec_.rewriter) throw ConfigError("style rewrite requires a rewriter");
    spec_.check_rewriter_excluded();
    auto& rewriter = client(spec_.rewriter->backend);
    auto restyle = [&](ResponseRecord& r) {
      llm::CompletionRequest req;
      req.messages = build_style_prompt(store_, spec_.style, r.original_text, spec_.length_limit_words);
      req.max_tokens = spec_.max_tokens;
      r.text = std::string(trim(rewriter.complete(std::move(req)).text));
      r.style = spec_.style;
      r.words = word_count(r.text);
      r.over_length = r.words > static_cast<std::size_t>(spec_.length_limit_words);
    };
    parallel_for(pairs.size(), spec_.workers, [&](std::size_t i) {
      try {
        restyle(pairs[i].first);
        restyle(pairs[i].second);
      } catch (...) {
        rethrow_with_context(pairs[i].instruction.id);
      }
    });
    return pairs;
  }

  JudgeVerdict judge_one(const JudgeRef& judge, const ResponsePair& pair, bool hard_votes) {
    auto& c = client(judge.backend);
    JudgePromptBundle bundle;
    try {
      bundle = build_judge_prompts(store_, pair.instruction, pair.first.text, pair.second.text, judge.kind,
                                   spec_.corpus.dataset_kind, judge.few_shot);
    } catch (const ContractError& e) {
      return detail::invalid_verdict(pair.instruction.id, VerdictMode::kSoft, e.what());
    }
    JudgeOptions opts;
    opts.max_tokens =
        c.config().capability == llm::Capability::kLogprob ? spec_.judge_max_tokens : spec_.token_judge_max_tokens;
    opts.low_mass_threshold = spec_.low_mass_threshold;
    opts.hard_votes = hard_votes;
    return evaluate_pair(c, bundle, opts);
  }

  // Verdicts for one judge, in instruction order. With `persist`, verdicts
  // already in that file are reused and new ones are appended as they
  // complete; the file is rewritten in sorted order at the end.
  std::vector<JudgeVerdict> judge(const JudgeRef& judge, const std::vector<ResponsePair>& pairs,
                                  const std::optional<std::filesystem::path>& persist = std::nullopt) {
    return run_resumable<JudgeVerdict>(
        pairs, persist, [&](const ResponsePair& p) { return judge_one(judge, p, false); },
        [](const JudgeVerdict& v) { return to_json(v); }, judge_verdict_from_json,
        [](const JudgeVerdict& v) { return v.instruction_id; });
  }

  std::vector<GoldEntry> gold(const std::vector<ResponsePair>& pairs,
                              const std::optional<std::filesystem::path>& persist = std::nullopt) {
    std::vector<std::string> ids;
    for (const auto& g : spec_.gold_panel) ids.push_back(g.id);
    return run_resumable<GoldEntry>(
        pairs, persist,
        [&](const ResponsePair& p) {
          std::vector<JudgeVerdict> members;
          for (const auto& g : spec_.gold_panel) members.push_back(judge_one(g, p, true));
          return aggregate_gold_entry(p.instruction.id, ids, std::move(members));
        },
        [](const GoldEntry& e) { return to_json(e); }, gold_entry_from_json,
        [](const GoldEntry& e) { return e.instruction_id; });
  }

  void flush() { cache_->flush(); }

 private:
  template <typename T, typename Compute, typename ToJson, typename FromJson, typename IdOf>
  std::vector<T> run_resumable(const std::vector<ResponsePair>& pairs,
                               const std::optional<std::filesystem::path>& persist, Compute compute,
                               ToJson to_j, FromJson from_j, IdOf id_of) {
    std::map<std::string, T> done;
    if (persist) {
      for (const auto& line : read_jsonl(*persist)) {
        auto v = from_j(line);
        auto id = id_of(v);
        done.insert_or_assign(std::move(id), std::move(v));
      }
    }
    std::vector<std::optional<T>> out(pairs.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (auto it = done.find(pairs[i].instruction.id); it != done.end()) {
        out[i] = it->second;
      } else {
        todo.push_back(i);
      }
    }
    std::mutex append_mu;
    std::optional<std::ofstream> progress;
    if (persist && !todo.empty()) {
      if (persist->has_parent_path()) std::filesystem::create_directories(persist->parent_path());
      progress.emplace(*persist, std::ios::binary | std::ios::app);
    }
    parallel_for(todo.size(), spec_.workers, [&](std::size_t k) {
      const auto i = todo[k];
      try {
        out[i] = compute(pairs[i]);
      } catch (...) {
        rethrow_with_context(pairs[i].instruction.id);
      }
      if (progress) {
        std::lock_guard lock(append_mu);
        *progress << to_j(*out[i]).dump() << '\n' << std::flush;
      }
    });
    progress.reset();

    std::vector<T> result;
    result.reserve(out.size());
    for (auto& v : out) result.push_back(std::move(*v));
    std::ranges::sort(result, {}, id_of);
    if (persist) {
      std::vector<nlohmann::json> lines;
      for (const auto& v : result) lines.push_back(to_j(v));
      write_jsonl_atomic(*persist, lines);
    }
    return result;
  }

  ExperimentSpec spec_;
  TemplateStore store_;
  std::shared_ptr<llm::ResponseCache> cache_;
  std::map<std::string, std::shared_ptr<llm::Transport>> transports_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<llm::LlmClient>> clients_;
};

// --- run directory -------------------------------------------------------

inline std::filesystem::path responses_path(const std::filesystem::path& run_dir) { return run_dir / "responses.jsonl"; }
inline std::filesystem::path verdicts_path(const std::filesystem::path& run_dir, const std::string& judge_id) {
  return run_dir / "verdicts" / (judge_id + ".jsonl");
}
inline std::filesystem::path gold_path(const std::filesystem::path& run_dir) { return run_dir / "gold.jsonl"; }
inline std::filesystem::path result_path(const std::filesystem::path& run_dir) { return run_dir / "result.json"; }

inline void save_responses(const std::filesystem::path& run_dir, const std::vector<ResponsePair>& pairs) {
  std::vector<nlohmann::json> lines;
  for (const auto& p : pairs) lines.push_back(to_json(p));
  write_jsonl_atomic(responses_path(run_dir), lines);
}

inline std::vector<ResponsePair> load_responses(const std::filesystem::path& run_dir) {
  const auto path = responses_path(run_dir);
  if (!std::filesystem::exists(path)) throw ConfigError("no responses in " + run_dir.string() + "; run generate first");
  std::vector<ResponsePair> pairs;
  for (const auto& line : read_jsonl(path)) pairs.push_back(response_pair_from_json(line));
  return pairs;
}

inline std::vector<JudgeVerdict> load_verdicts(const std::filesystem::path& run_dir, const std::string& judge_id) {
  const auto path = verdicts_path(run_dir, judge_id);
  if (!std::filesystem::exists(path)) throw ConfigError("no verdicts for judge " + judge_id + "; run judge first");
  std::vector<JudgeVerdict> out;
  for (const auto& line : read_jsonl(path)) out.push_back(judge_verdict_from_json(line));
  return out;
}

inline std::vector<GoldEntry> load_gold(const std::filesystem::path& run_dir) {
  const auto path = gold_path(run_dir);
  if (!std::filesystem::exists(path)) throw ConfigError("no gold verdicts in " + run_dir.string() + "; run gold first");
  std::vector<GoldEntry> out;
  for (const auto& line : read_jsonl(path)) out.push_back(gold_entry_from_json(line));
  return out;
}

inline PairResult score_run_dir(const ExperimentSpec& spec, const std::filesystem::path& run_dir) {
  const auto pairs = load_responses(run_dir);
  std::map<std::string, std::vector<JudgeVerdict>> verdicts;
  for (const auto& j : spec.judges) verdicts.emplace(j.id, load_verdicts(run_dir, j.id));
  return score(spec, pairs, verdicts, load_gold(run_dir));
}

inline void save_result(const std::filesystem::path& run_dir, const PairResult& result) {
  std::filesystem::create_directories(run_dir);
  auto tmp = result_path(run_dir);
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << to_json(result).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, result_path(run_dir));
}

struct RunStats {
  std::size_t network_calls = 0;  // backend calls not answered by the cache
};

struct RunOptions {
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> run_dir;
  TransportFactory factory = default_transport;
  RunStats* stats = nullptr;
};

// Full pipeline. With a run directory every stage output is persisted.
inline PairResult run_experiment(const ExperimentSpec& spec, const RunOptions& options = {}) {
  Experiment exp(spec, options.cache_dir, options.factory);
  const auto instructions = exp.sample_instructions();
  const auto pairs = exp.generate(instructions);
  if (options.run_dir) save_responses(*options.run_dir, pairs);

  std::map<std::string, std::vector<JudgeVerdict>> verdicts;
  for (const auto& j : exp.spec().judges) {
    std::optional<std::filesystem::path> persist;
    if (options.run_dir) persist = verdicts_path(*options.run_dir, j.id);
    verdicts.emplace(j.id, exp.judge(j, pairs, persist));
  }
  std::optional<std::filesystem::path> gold_persist;
  if (options.run_dir) gold_persist = gold_path(*options.run_dir);
  const auto gold = exp.gold(pairs, gold_persist);
  exp.flush();
  if (options.stats) options.stats->network_calls = exp.network_calls();

  auto result = score(exp.spec(), pairs, verdicts, gold);
  if (options.run_dir) save_result(*options.run_dir, result);
  return result;
}

}  // namespace selfpref::protocol
