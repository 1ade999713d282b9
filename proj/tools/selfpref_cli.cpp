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

// selfpref: command-line front end.
//
//   selfpref ingest --from alpaca-eval --input eval.json --out corpus.jsonl
//   selfpref run --spec exp.json --run-dir runs/exp --format table
//   selfpref simulate --study taylor --n 1000000 --format csv
//
// Exit status: 0 when every verdict is valid, 2 when some verdicts are
// invalid (the report is still written), 1 on error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selfpref/corpus.hpp"
#include "selfpref/errors.hpp"
#include "selfpref/metrics.hpp"
#include "selfpref/protocol/run.hpp"
#include "selfpref/report.hpp"
#include "selfpref/simulator.hpp"

namespace fs = std::filesystem;
namespace sp = selfpref;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

struct Options {
  std::string spec_path;
  std::string cache_dir = ".selfpref-cache";
  std::string run_dir;
  std::string format = "table";
  std::string tie_policy;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool live_smoke = false;
};

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  const fs::path path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw sp::ConfigError("cannot write " + o.out);
  f << text;
}

sp::protocol::ExperimentSpec load(const Options& o) {
  if (o.spec_path.empty()) throw sp::ConfigError("--spec is required");
  auto spec = sp::protocol::load_spec(o.spec_path);
  if (!o.tie_policy.empty()) spec.tie_policy = sp::metrics::parse_tie_policy(o.tie_policy);
  if (o.seed) spec.corpus.seed = *o.seed;
  return spec;
}

fs::path run_dir(const Options& o, const sp::protocol::ExperimentSpec& spec) {
  return o.run_dir.empty() ? fs::path("runs") / spec.name : fs::path(o.run_dir);
}

std::optional<fs::path> cache_dir(const Options& o) {
  if (o.cache_dir.empty()) return std::nullopt;
  return fs::path(o.cache_dir);
}

int status_of(const sp::protocol::PairResult& r) { return r.fully_valid() ? kExitOk : kExitPartial; }

int count_invalid(const std::vector<sp::protocol::JudgeVerdict>& v) {
  int n = 0;
  for (const auto& x : v) n += x.valid ? 0 : 1;
  return n;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    const auto item = s.substr(pos, comma - pos);
    if (!item.empty()) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != item.size()) throw sp::ConfigError("not a number: '" + item + "'");
      out.push_back(v);
    }
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-preference bias measurement for LLM judges"};
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--spec", o.spec_path, "Experiment spec (JSON)");
  app.add_option("--cache-dir", o.cache_dir, "Response cache directory; empty disables persistence")
      ->capture_default_str();
  app.add_option("--run-dir", o.run_dir, "Stage output directory (default runs/<name>)");
  app.add_option("--format", o.format, "Report format")
      ->check(CLI::IsMember({"csv", "json", "table"}))
      ->capture_default_str();
  app.add_option("--tie-policy", o.tie_policy, "Override the spec's tie policy")
      ->check(CLI::IsMember({"half", "exclude"}));
  app.add_option("--out", o.out, "Write the report here instead of stdout");
  app.add_option("--seed", o.seed, "Sampling seed (corpus sample, simulator draws)");
  app.add_flag("--live-smoke", o.live_smoke, "Allow calls to real provider endpoints in smoke");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a dataset into corpus JSONL");
  std::string from = "jsonl", input, kind_name;
  std::size_t sample_n = 0;
  ingest->add_option("--from", from, "Source layout")
      ->check(CLI::IsMember({"jsonl", "alpaca-eval", "truthfulqa", "wmt19"}))
      ->capture_default_str();
  ingest->add_option("--input", input, "Source file")->required();
  ingest->add_option("--kind", kind_name, "Dataset kind (default from --from)");
  ingest->add_option("--sample", sample_n, "Keep a seeded uniform sample of this many records");

  // stages
  auto* generate = app.add_subcommand("generate", "Generate both models' responses");
  auto* judge = app.add_subcommand("judge", "Judge responses in both presentation orders");
  std::string judge_id;
  judge->add_option("--judge", judge_id, "Only this judge");
  auto* gold = app.add_subcommand("gold", "Gold-panel verdicts");
  auto* score = app.add_subcommand("score", "Score verdict files, write result.json and a report");
  auto* report = app.add_subcommand("report", "Render a report from stored verdict files");
  auto* run = app.add_subcommand("run", "generate, judge, gold and score in one go");

  // agree
  auto* agree = app.add_subcommand("agree", "Agreement between gold verdicts and human labels");
  std::string annotations;
  agree->add_option("--annotations", annotations, "JSONL of {\"id\", \"winner\"}")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Bradley-Terry bias simulator studies");
  std::string study = "taylor", dist = "normal", b_list = "0.4,0.2,0.1,0.05", panel_list = "0.3,-0.3,0",
              points;
  double mean = 0.0, stddev = 1.0, lo = -1.0, hi = 1.0, b_single = 0.1;
  std::size_t n = 100000;
  simulate->add_option("--study", study)->check(CLI::IsMember({"taylor", "panel", "consistency"}))->capture_default_str();
  simulate->add_option("--dist", dist)->check(CLI::IsMember({"normal", "uniform", "points"}))->capture_default_str();
  simulate->add_option("--mean", mean)->capture_default_str();
  simulate->add_option("--stddev", stddev)->capture_default_str();
  simulate->add_option("--lo", lo)->capture_default_str();
  simulate->add_option("--hi", hi)->capture_default_str();
  simulate->add_option("--points", points, "Comma-separated gap values (points)");
  simulate->add_option("--n", n)->capture_default_str();
  simulate->add_option("--b", b_list, "Bias values (taylor)")->capture_default_str();
  simulate->add_option("--bias", b_single, "Bias (consistency)")->capture_default_str();
  simulate->add_option("--panel", panel_list, "Panel member biases (panel)")->capture_default_str();

  // smoke
  auto* smoke = app.add_subcommand("smoke", "One judging call per judge backend (needs --live-smoke)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto format = sp::report::parse_format(o.format);

    if (*ingest) {
      const auto fmt = sp::corpus::parse_source_format(from);
      const auto kind = kind_name.empty() ? sp::corpus::default_kind(fmt) : sp::corpus::parse_dataset_kind(kind_name);
      std::ifstream in(input, std::ios::binary);
      if (!in) throw sp::ConfigError("cannot open " + input);
      auto records = sp::corpus::ingest(in, fmt, kind);
      if (sample_n > 0) records = sp::corpus::sample_corpus(records, sample_n, o.seed.value_or(1234));
      emit(o, sp::corpus::serialize_corpus(records));
      std::cerr << records.size() << " records\n";
      return kExitOk;
    }

    if (*simulate) {
      sp::sim::GapDistribution d;
      if (dist == "normal") {
        d = sp::sim::NormalGaps{mean, stddev};
      } else if (dist == "uniform") {
        d = sp::sim::UniformGaps{lo, hi};
      } else {
        d = sp::sim::PointMassGaps{parse_list(points)};
      }
      const auto seed = o.seed.value_or(1);
      const auto world = sp::sim::sample_world(d, n, seed);
      sp::report::ReportTable t;
      if (study == "taylor") {
        const auto bs = parse_list(b_list);
        t = sp::report::taylor_table(world, sp::sim::taylor_error_curve(world, bs));
      } else if (study == "panel") {
        const auto biases = parse_list(panel_list);
        t = sp::report::panel_table(world, biases, sp::sim::panel_study(world, biases));
      } else {
        t = sp::report::consistency_table(world, b_single, sp::sim::consistency_check(world, b_single, seed + 1));
      }
      emit(o, sp::report::render_sim_report(t, format));
      return kExitOk;
    }

    const auto spec = load(o);
    const auto dir = run_dir(o, spec);

    if (*smoke) {
      if (!o.live_smoke) throw sp::ConfigError("smoke calls real endpoints; pass --live-smoke to allow it");
      sp::protocol::Experiment exp(spec, std::nullopt);
      const sp::corpus::InstructionRecord rec{"smoke-0", spec.corpus.dataset_kind, "What is 2 + 2?", std::nullopt};
      for (const auto& j : spec.judges) {
        sp::protocol::ResponsePair p{rec, {}, {}};
        p.first.text = "4";
        p.second.text = "5";
        const auto v = exp.judge_one(j, p, false);
        std::cout << j.id << ": valid=" << v.valid << " mode=" << (v.soft ? "soft" : "tie-mode");
        if (v.soft) {
          std::cout << " forward=(" << v.soft->forward.p_first << "," << v.soft->forward.p_second << ")";
        }
        if (!v.valid) std::cout << " reason=" << v.invalid_reason;
        std::cout << '\n';
      }
      return kExitOk;
    }

    if (*run) {
      const auto result = sp::protocol::run_experiment(spec, {cache_dir(o), dir, sp::protocol::default_transport});
      emit(o, sp::report::render_pair_report(result, format));
      return status_of(result);
    }

    if (*generate) {
      sp::protocol::Experiment exp(spec, cache_dir(o));
      const auto pairs = exp.generate(exp.sample_instructions());
      sp::protocol::save_responses(dir, pairs);
      exp.flush();
      std::size_t flagged = 0, over = 0;
      for (const auto& p : pairs) {
        flagged += p.first.reasoning_flagged + p.second.reasoning_flagged;
        over += p.first.over_length + p.second.over_length;
      }
      std::cerr << pairs.size() << " instruction pairs -> " << sp::protocol::responses_path(dir).string() << " ("
                << flagged << " unterminated reasoning, " << over << " over length)\n";
      return kExitOk;
    }

    if (*judge) {
      sp::protocol::Experiment exp(spec, cache_dir(o));
      const auto pairs = sp::protocol::load_responses(dir);
      int invalid = 0;
      bool found = judge_id.empty();
      for (const auto& j : spec.judges) {
        if (!judge_id.empty() && j.id != judge_id) continue;
        found = true;
        const auto v = exp.judge(j, pairs, sp::protocol::verdicts_path(dir, j.id));
        invalid += count_invalid(v);
        std::cerr << j.id << ": " << v.size() << " verdicts, " << count_invalid(v) << " invalid\n";
      }
      exp.flush();
      if (!found) throw sp::ConfigError("no judge '" + judge_id + "' in the spec");
      return invalid ? kExitPartial : kExitOk;
    }

    if (*gold) {
      sp::protocol::Experiment exp(spec, cache_dir(o));
      const auto entries = exp.gold(sp::protocol::load_responses(dir), sp::protocol::gold_path(dir));
      exp.flush();
      std::size_t invalid = 0;
      for (const auto& e : entries) invalid += e.valid() ? 0 : 1;
      std::cerr << "gold: " << entries.size() << " entries, " << invalid << " invalid\n";
      return invalid ? kExitPartial : kExitOk;
    }

    if (*score || *report) {
      const auto result = sp::protocol::score_run_dir(spec, dir);
      if (*score) sp::protocol::save_result(dir, result);
      emit(o, sp::report::render_pair_report(result, format));
      return status_of(result);
    }

    if (*agree) {
      const auto pairs = sp::protocol::load_responses(dir);
      std::vector<sp::corpus::InstructionRecord> instructions;
      for (const auto& p : pairs) instructions.push_back(p.instruction);
      const auto human =
          sp::corpus::load_annotations(annotations, instructions, {spec.model_a.id, spec.model_b.id});
      sp::metrics::LabelMap gold_labels, human_labels;
      std::size_t dropped = 0;
      for (const auto& e : sp::protocol::load_gold(dir)) {
        if (!e.valid()) {
          ++dropped;
          continue;
        }
        gold_labels[e.instruction_id] =
            e.verdict->winner == sp::metrics::Outcome::kFirst ? spec.model_a.id : spec.model_b.id;
        if (auto it = human.labels.find(e.instruction_id); it != human.labels.end()) {
          human_labels.insert(*it);
        }
      }
      auto t = sp::report::agreement_table(gold_labels, human_labels, spec.model_a.id);
      if (dropped) t.notes.push_back(std::to_string(dropped) + " instructions without a valid gold verdict skipped");
      emit(o, sp::report::render(t, format));
      return dropped ? kExitPartial : kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
