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

// Runs the scripted experiment in data/mock_spec.json end to end, in
// memory, and prints the pair report. The spec pairs a reasoning model
// (its <think> spans are stripped before judging) with a post-trained one,
// and includes a token-only judge that always answers "A": every one of its
// verdicts becomes a tie once both presentation orders are considered.

#include <filesystem>
#include <iostream>

#include "selfpref/protocol/run.hpp"
#include "selfpref/report.hpp"

int main(int argc, char** argv) {
  namespace protocol = selfpref::protocol;
  const std::filesystem::path spec_path =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::path(SELFPREF_SAMPLE_DIR) / "data/mock_spec.json";
  try {
    const auto spec = protocol::load_spec(spec_path);
    const auto result = protocol::run_experiment(spec);
    std::cout << selfpref::report::render_pair_report(result, selfpref::report::Format::kTable);
    return result.fully_valid() ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
