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

// Synthetic Bradley-Terry world for studying the self-preference estimator.
//
// A world is a vector of quality gaps delta = Q(r_A) - Q(r_B), one per
// synthetic instruction. A judge with bias b prefers r_A with probability
// sigmoid(delta + b); an unbiased judge with sigmoid(delta). All expectations
// below are plain means over one shared delta vector (common random
// numbers), so identities such as
//
//   dbg_true == w_biased - w_gold_true
//
// hold exactly rather than within Monte Carlo noise. Bias is constant across
// instructions, i.e. uncorrelated with delta.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "selfpref/errors.hpp"
#include "selfpref/metrics.hpp"

namespace selfpref::sim {

struct NormalGaps {
  double mean = 0.0;
  double stddev = 1.0;
};

struct UniformGaps {
  double lo = -1.0;
  double hi = 1.0;
};

// Deterministic list of gaps, repeated cyclically to fill the world.
struct PointMassGaps {
  std::vector<double> values;
};

using GapDistribution = std::variant<NormalGaps, UniformGaps, PointMassGaps>;

namespace detail {

inline std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

}  // namespace detail

inline std::string describe(const GapDistribution& d) {
  struct {
    std::string operator()(const NormalGaps& g) const {
      return "normal(" + detail::shortest(g.mean) + "," + detail::shortest(g.stddev) + ")";
    }
    std::string operator()(const UniformGaps& g) const {
      return "uniform(" + detail::shortest(g.lo) + "," + detail::shortest(g.hi) + ")";
    }
    std::string operator()(const PointMassGaps& g) const {
      return "point-mass[" + std::to_string(g.values.size()) + "]";
    }
  } visitor;
  return std::visit(visitor, d);
}

struct SimWorld {
  std::vector<double> deltas;
  GapDistribution distribution = NormalGaps{};
  std::uint64_t seed = 0;

  std::size_t n() const noexcept { return deltas.size(); }
};

inline SimWorld sample_world(const GapDistribution& distribution, std::size_t n,
                             std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample_world: n must be at least 1");
  SimWorld world;
  world.distribution = distribution;
  world.seed = seed;
  world.deltas.resize(n);
  std::mt19937_64 rng(seed);

  if (const auto* g = std::get_if<NormalGaps>(&distribution)) {
    if (!(g->stddev > 0.0) || !std::isfinite(g->mean)) {
      throw ConfigError("sample_world: normal stddev must be positive");
    }
    std::normal_distribution<double> dist(g->mean, g->stddev);
    for (auto& d : world.deltas) d = dist(rng);
  } else if (const auto* u = std::get_if<UniformGaps>(&distribution)) {
    if (!(u->lo < u->hi) || !std::isfinite(u->lo) || !std::isfinite(u->hi)) {
      throw ConfigError("sample_world: uniform bounds must satisfy lo < hi");
    }
    std::uniform_real_distribution<double> dist(u->lo, u->hi);
    for (auto& d : world.deltas) d = dist(rng);
  } else {
    const auto& p = std::get<PointMassGaps>(distribution);
    if (p.values.empty()) throw ConfigError("sample_world: point-mass list is empty");
    for (double v : p.values) {
      if (!std::isfinite(v)) throw ConfigError("sample_world: point-mass values must be finite");
    }
    for (std::size_t i = 0; i < n; ++i) world.deltas[i] = p.values[i % p.values.size()];
  }
  return world;
}

// Sign convention: positive bias favors r_A.
struct BiasSpec {
  double b_self = 0.0;
  std::vector<double> panel_biases;
};

struct SimEstimates {
  double w_biased = 0.0;          // E[sigmoid(delta + b)]
  double w_gold_true = 0.0;       // E[sigmoid(delta)]
  double dbg_true = 0.0;          // w_biased - w_gold_true
  double taylor = 0.0;            // E[sigmoid'(delta)] * b
  double thresholded_rate = 0.0;  // E[1{sigmoid(delta + b) > 0.5}]
  double bernoulli_rate = 0.0;    // mean of Bernoulli(sigmoid(delta + b)) draws
  double panel_rate = 0.0;        // E_{x,k}[sigmoid(delta + b_k)]
  double remainder = 0.0;         // panel_rate - w_gold_true
};

namespace detail {

inline void require_nonempty(const SimWorld& world) {
  if (world.deltas.empty()) throw ContractError("simulator: world is empty");
}

template <typename F>
double mean_of(std::span<const double> xs, F&& f) {
  double sum = 0.0;
  for (double x : xs) sum += f(x);
  return sum / static_cast<double>(xs.size());
}

inline double panel_mean(std::span<const double> deltas, std::span<const double> biases) {
  if (biases.empty()) throw ContractError("panel_study: panel is empty");
  double sum = 0.0;
  for (double b : biases) sum += mean_of(deltas, [b](double d) { return metrics::sigmoid(d + b); });
  return sum / static_cast<double>(biases.size());
}

}  // namespace detail

inline double expected_preference(const SimWorld& world, double bias) {
  detail::require_nonempty(world);
  return detail::mean_of(world.deltas, [bias](double d) { return metrics::sigmoid(d + bias); });
}

inline double mean_sigmoid_slope(const SimWorld& world) {
  detail::require_nonempty(world);
  return detail::mean_of(world.deltas, [](double d) { return metrics::sigmoid_derivative(d); });
}

inline double thresholded_rate(const SimWorld& world, double bias) {
  detail::require_nonempty(world);
  return detail::mean_of(world.deltas,
                         [bias](double d) { return metrics::sigmoid(d + bias) > 0.5 ? 1.0 : 0.0; });
}

inline double bernoulli_rate(const SimWorld& world, double bias, std::uint64_t seed) {
  detail::require_nonempty(world);
  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (double d : world.deltas) {
    std::bernoulli_distribution draw(metrics::sigmoid(d + bias));
    if (draw(rng)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(world.n());
}

inline SimEstimates estimate(const SimWorld& world, const BiasSpec& bias,
                             std::uint64_t bernoulli_seed) {
  detail::require_nonempty(world);
  SimEstimates e;
  e.w_biased = expected_preference(world, bias.b_self);
  e.w_gold_true = expected_preference(world, 0.0);
  e.dbg_true = e.w_biased - e.w_gold_true;
  e.taylor = mean_sigmoid_slope(world) * bias.b_self;
  e.thresholded_rate = thresholded_rate(world, bias.b_self);
  e.bernoulli_rate = bernoulli_rate(world, bias.b_self, bernoulli_seed);
  if (bias.panel_biases.empty()) {
    e.panel_rate = e.w_gold_true;
  } else {
    e.panel_rate = detail::panel_mean(world.deltas, bias.panel_biases);
  }
  e.remainder = e.panel_rate - e.w_gold_true;
  return e;
}

struct TaylorPoint {
  double b = 0.0;
  double dbg_true = 0.0;
  double taylor = 0.0;
  // |dbg_true - taylor| / |taylor|; empty when taylor is zero.
  std::optional<double> relative_error;
};

inline std::vector<TaylorPoint> taylor_error_curve(const SimWorld& world,
                                                   std::span<const double> b_values) {
  detail::require_nonempty(world);
  for (double b : b_values) {
    if (b == 0.0 || !std::isfinite(b)) {
      throw ContractError("taylor_error_curve: bias values must be finite and nonzero");
    }
  }
  const double gold = expected_preference(world, 0.0);
  const double slope = mean_sigmoid_slope(world);
  std::vector<TaylorPoint> curve;
  curve.reserve(b_values.size());
  for (double b : b_values) {
    TaylorPoint p;
    p.b = b;
    p.dbg_true = expected_preference(world, b) - gold;
    p.taylor = slope * b;
    if (p.taylor != 0.0) p.relative_error = std::abs(p.dbg_true - p.taylor) / std::abs(p.taylor);
    curve.push_back(p);
  }
  return curve;
}

struct PanelStudy {
  double panel_rate = 0.0;
  double remainder = 0.0;
  // Standard error of `remainder` over instructions.
  double std_error = 0.0;
};

inline PanelStudy panel_study(const SimWorld& world, std::span<const double> panel_biases) {
  detail::require_nonempty(world);
  if (panel_biases.empty()) throw ContractError("panel_study: panel is empty");
  PanelStudy s;
  s.panel_rate = detail::panel_mean(world.deltas, panel_biases);
  s.remainder = s.panel_rate - expected_preference(world, 0.0);

  // Per-instruction remainder for the standard error (Welford).
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  for (double d : world.deltas) {
    double member_sum = 0.0;
    for (double b : panel_biases) member_sum += metrics::sigmoid(d + b);
    const double r = member_sum / static_cast<double>(panel_biases.size()) - metrics::sigmoid(d);
    ++count;
    const double step = r - mean;
    mean += step / static_cast<double>(count);
    m2 += step * (r - mean);
  }
  if (count > 1) {
    s.std_error = std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
  }
  return s;
}

struct ConsistencyReport {
  double w_biased = 0.0;
  double thresholded_rate = 0.0;
  double bernoulli_rate = 0.0;
  double polarization = 0.0;  // mean |sigmoid(delta + b) - 0.5|
};

inline ConsistencyReport consistency_check(const SimWorld& world, double b,
                                           std::uint64_t bernoulli_seed) {
  detail::require_nonempty(world);
  ConsistencyReport r;
  r.w_biased = expected_preference(world, b);
  r.thresholded_rate = thresholded_rate(world, b);
  r.bernoulli_rate = bernoulli_rate(world, b, bernoulli_seed);
  r.polarization =
      detail::mean_of(world.deltas, [b](double d) { return std::abs(metrics::sigmoid(d + b) - 0.5); });
  return r;
}

}  // namespace selfpref::sim
