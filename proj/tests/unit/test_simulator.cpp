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

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "selfpref/errors.hpp"
#include "selfpref/simulator.hpp"

namespace sim = selfpref::sim;

namespace {

// Oracles by adaptive quadrature over the standard normal density,
// independent of the sampling code under test.
double normal_expectation(double (*f)(double, double), double b) {
  auto integrand = [&](double x) {
    return f(x, b) * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 15, 1e-14);
}

double logistic(double x, double b) { return 1.0 / (1.0 + std::exp(-(x + b))); }
double logistic_slope(double x, double) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 - s);
}

}  // namespace

TEST(Oracle, SlopeConstant) {
  EXPECT_NEAR(normal_expectation(logistic_slope, 0.0), 0.206620964141907, 1e-12);
}

TEST(World, DeterministicBySeed) {
  const auto a = sim::sample_world(sim::NormalGaps{}, 1000, 9);
  const auto b = sim::sample_world(sim::NormalGaps{}, 1000, 9);
  const auto c = sim::sample_world(sim::NormalGaps{}, 1000, 10);
  EXPECT_EQ(a.deltas, b.deltas);
  EXPECT_NE(a.deltas, c.deltas);
}

TEST(World, UniformWithinBounds) {
  const auto w = sim::sample_world(sim::UniformGaps{-2.0, 3.0}, 5000, 1);
  for (double d : w.deltas) {
    EXPECT_GE(d, -2.0);
    EXPECT_LT(d, 3.0);
  }
}

TEST(World, PointMassCycles) {
  const auto w = sim::sample_world(sim::PointMassGaps{{1.0, -1.0, 0.5}}, 7, 0);
  EXPECT_EQ(w.deltas, (std::vector<double>{1.0, -1.0, 0.5, 1.0, -1.0, 0.5, 1.0}));
}

TEST(World, InvalidParameters) {
  EXPECT_THROW(sim::sample_world(sim::NormalGaps{0.0, -1.0}, 10, 0), selfpref::ConfigError);
  EXPECT_THROW(sim::sample_world(sim::UniformGaps{1.0, 1.0}, 10, 0), selfpref::ConfigError);
  EXPECT_THROW(sim::sample_world(sim::PointMassGaps{}, 10, 0), selfpref::ConfigError);
  EXPECT_THROW(sim::sample_world(sim::NormalGaps{}, 0, 0), selfpref::ConfigError);
}

TEST(Estimates, ZeroBiasIsExactlyZero) {
  const auto w = sim::sample_world(sim::NormalGaps{}, 20000, 3);
  const auto e = sim::estimate(w, {0.0, {}}, 1);
  EXPECT_EQ(e.dbg_true, 0.0);
  EXPECT_EQ(e.taylor, 0.0);
}

TEST(Estimates, MatchQuadratureWithinMonteCarloError) {
  const auto w = sim::sample_world(sim::NormalGaps{}, 400000, 11);
  for (double b : {-0.4, 0.2, 0.4}) {
    // sigma(.) lies in (0, 1) so the MC standard error is below 0.5/sqrt(n).
    const double tol = 5 * 0.5 / std::sqrt(400000.0);
    EXPECT_NEAR(sim::expected_preference(w, b), normal_expectation(logistic, b), tol);
  }
  EXPECT_NEAR(sim::mean_sigmoid_slope(w), 0.206620964141907, 1e-3);
}

TEST(Estimates, MonotoneInBias) {
  const auto w = sim::sample_world(sim::NormalGaps{}, 50000, 4);
  double prev = -1.0;
  for (double b = -0.4; b <= 0.4001; b += 0.05) {
    const double d = sim::expected_preference(w, b) - sim::expected_preference(w, 0.0);
    EXPECT_GT(d, prev);
    if (b > 1e-9) {
      EXPECT_GT(d, 0.0);
    }
    if (b < -1e-9) {
      EXPECT_LT(d, 0.0);
    }
    prev = d;
  }
}

TEST(Estimates, PanelRemainderFormula) {
  const auto w = sim::sample_world(sim::NormalGaps{}, 1000, 2);
  const auto e = sim::estimate(w, {0.1, {0.2, -0.1, 0.3}}, 5);
  double sum = 0.0;
  for (double d : w.deltas) {
    sum += (logistic(d, 0.2) + logistic(d, -0.1) + logistic(d, 0.3)) / 3.0 - logistic(d, 0.0);
  }
  EXPECT_NEAR(e.remainder, sum / 1000.0, 1e-12);
}

TEST(Taylor, RelativeErrorShrinksWithBias) {
  const auto w = sim::sample_world(sim::NormalGaps{}, 100000, 6);
  const std::vector<double> bs{0.4, 0.2, 0.1, 0.05};
  const auto curve = sim::taylor_error_curve(w, bs);
  ASSERT_EQ(curve.size(), 4u);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_LT(*curve[i].relative_error, *curve[i - 1].relative_error);
  }
  const std::vector<double> zero{0.0};
  EXPECT_THROW(sim::taylor_error_curve(w, zero), selfpref::ContractError);
}

TEST(Panel, SymmetricPanelCancels) {
  const auto w = sim::sample_world(sim::NormalGaps{}, 200000, 8);
  const std::vector<double> panel{0.3, -0.3, 0.0};
  const auto s = sim::panel_study(w, panel);
  EXPECT_NEAR(s.panel_rate, 0.5, 0.003);
  EXPECT_LT(std::abs(s.remainder), 5 * s.std_error + 1e-12);
  const std::vector<double> skewed{0.3, 0.3, 0.3};
  EXPECT_GT(sim::panel_study(w, skewed).remainder, 0.05);
}

TEST(Consistency, PolarizedWorldsAgree) {
  // sigmoid(delta) = 0.99 and 0.01 exactly at delta = +-logit(0.99).
  const double x = std::log(0.99 / 0.01);
  const auto w = sim::sample_world(sim::PointMassGaps{{x, -x}}, 10000, 0);
  const auto c = sim::consistency_check(w, 0.0, 3);
  EXPECT_NEAR(c.w_biased, 0.5, 1e-12);
  EXPECT_NEAR(c.bernoulli_rate, c.w_biased, 0.02);
  EXPECT_EQ(c.thresholded_rate, 0.5);
  EXPECT_NEAR(c.polarization, 0.49, 1e-12);
}

TEST(Consistency, UnpolarizedWorldDiverges) {
  const auto w = sim::sample_world(sim::PointMassGaps{{0.0}}, 10000, 0);
  const auto c = sim::consistency_check(w, 0.0, 3);
  EXPECT_EQ(c.w_biased, 0.5);
  EXPECT_EQ(c.thresholded_rate, 0.0);  // sigmoid(0) = 0.5 is not > 0.5
  EXPECT_EQ(c.polarization, 0.0);
}

TEST(Bernoulli, SeedDeterminism) {
  const auto w = sim::sample_world(sim::NormalGaps{}, 1000, 1);
  EXPECT_EQ(sim::bernoulli_rate(w, 0.1, 7), sim::bernoulli_rate(w, 0.1, 7));
}
