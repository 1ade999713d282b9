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

// How far a judge's self bias b moves its win rate, and how well the
// linear estimate E[sigmoid'(delta)] * b tracks it.

#include <iostream>
#include <vector>

#include "selfpref/report.hpp"
#include "selfpref/simulator.hpp"

int main() {
  namespace sim = selfpref::sim;
  namespace report = selfpref::report;

  const auto world = sim::sample_world(sim::NormalGaps{0.0, 1.0}, 200000, 42);
  const std::vector<double> biases{0.8, 0.4, 0.2, 0.1, 0.05};
  std::cout << report::render_sim_report(report::taylor_table(world, sim::taylor_error_curve(world, biases)),
                                         report::Format::kTable)
            << '\n';

  // A panel whose members' biases cancel leaves the gold rate unbiased.
  const std::vector<double> panel{0.3, -0.3, 0.0};
  std::cout << report::render_sim_report(report::panel_table(world, panel, sim::panel_study(world, panel)),
                                         report::Format::kTable);
  return 0;
}
