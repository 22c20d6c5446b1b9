// Copyright 2026 The qmeta Authors
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

#include "doctest.h"
#include "qmeta/error.hpp"
#include "qmeta/lqr.hpp"
#include "qmeta/random.hpp"

using namespace qmeta;

namespace {

LqrProblem integrator() {
  return {RealMatrix::Zero(1, 1), RealMatrix::Ones(1, 1), RealMatrix::Ones(1, 1), RealMatrix::Ones(1, 1)};
}

LqrProblem msd(double m) {
  MassSpringDamper s;
  s.mass = m;
  return s.problem();
}

RealMatrix fd_grad(const LqrProblem& p, const RealMatrix& K, double h = 1e-6) {
  RealMatrix g(K.rows(), K.cols());
  for (Eigen::Index i = 0; i < K.size(); ++i) {
    RealMatrix kp = K, km = K;
    kp(i) += h;
    km(i) -= h;
    g(i) = (lqr_cost(p, kp) - lqr_cost(p, km)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("solve_care: scalar integrator") {
  const CareSolution s = solve_care(integrator());
  CHECK(s.P(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.K(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lqr_cost(integrator(), s.K) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lqr_cost_grad(integrator(), s.K).norm() < 1e-12);
}

TEST_CASE("solve_care: mass-spring-damper properties") {
  const LqrProblem p = msd(1.0);
  CHECK(p.A == RealMatrix{{0.0, 1.0}, {-2.0, -0.5}});
  CHECK(p.B == RealMatrix{{0.0}, {1.0}});
  const CareSolution s = solve_care(p);
  CHECK(s.residual <= 1e-9);
  CHECK((s.P - s.P.transpose()).norm() < 1e-14);
  CHECK(Eigen::SelfAdjointEigenSolver<RealMatrix>(s.P).eigenvalues().minCoeff() > 0.0);
  CHECK(is_hurwitz(p.A - p.B * s.K));
  CHECK(lqr_cost(p, s.K) == doctest::Approx(s.P.trace()).epsilon(1e-10));

  LqrProblem q2 = p;
  q2.Q *= 2.0;
  const CareSolution s2 = solve_care(q2);
  CHECK(Eigen::SelfAdjointEigenSolver<RealMatrix>(s2.P - s.P).eigenvalues().minCoeff() >= -1e-12);

  for (double m : {0.2, 0.5, 1.7, 3.0}) CHECK(care_residual(msd(m), solve_care(msd(m)).P) <= 1e-9);
}

TEST_CASE("solve_care: unstable open loop and non-stabilizable input") {
  LqrProblem p;
  p.A = RealMatrix{{1.0, 1.0}, {0.0, 2.0}};
  p.B = RealMatrix{{0.0}, {1.0}};
  p.Q = RealMatrix::Identity(2, 2);
  p.R = RealMatrix::Identity(1, 1);
  const CareSolution s = solve_care(p);
  CHECK(s.residual <= 1e-9);
  CHECK(is_hurwitz(p.A - p.B * s.K));
  LqrProblem bad = p;
  bad.A = RealMatrix{{1.0, 0.0}, {0.0, -1.0}};
  CHECK_THROWS_AS(solve_care(bad), ConfigError);
  bad = p;
  bad.R(0, 0) = 0.0;
  CHECK_THROWS_AS(solve_care(bad), ConfigError);
}

TEST_CASE("lqr_cost: optimum, perturbations and instability") {
  const LqrProblem p = msd(1.0);
  const RealMatrix K = solve_care(p).K;
  const double j = lqr_cost(p, K);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (double d : {-1e-2, 1e-2}) {
      RealMatrix k2 = K;
      k2(i) += d;
      CHECK(lqr_cost(p, k2) > j);
    }
  const RealMatrix unstable{{-10.0, 0.0}};
  CHECK(std::isinf(lqr_cost(p, unstable)));
  CHECK_THROWS_AS(lqr_cost_grad(p, unstable), NumericError);
  CHECK_THROWS_AS(lqr_cost(p, RealMatrix::Zero(2, 2)), ShapeError);
  CHECK(lqr_cost(p, RealMatrix::Zero(1, 2)) >= 0.0);
}

TEST_CASE("lqr_cost_grad matches central differences on 20 random stable gains") {
  Rng rng(5);
  int checked = 0;
  double worst = 0.0;
  while (checked < 20) {
    const double m = rng.uniform(0.3, 2.0);
    const LqrProblem p = msd(m);
    const RealMatrix K{{rng.uniform(-1.0, 4.0), rng.uniform(-0.2, 4.0)}};
    if (!is_hurwitz(p.A - p.B * K)) continue;
    const RealMatrix g = lqr_cost_grad(p, K), fd = fd_grad(p, K);
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-8));
    ++checked;
  }
  MESSAGE("worst relative mismatch " << worst);
  CHECK(worst <= 1e-6);
}

TEST_CASE("lqr_cost_grad vanishes at the task optimum") {
  for (double m : {0.5, 1.0, 1.5}) CHECK(lqr_cost_grad(msd(m), solve_care(msd(m)).K).norm() <= 1e-8);
}

TEST_CASE("solve_lyapunov: residual and errors") {
  const RealMatrix A{{-1.0, 2.0}, {0.0, -3.0}};
  const RealMatrix W{{2.0, 0.5}, {0.5, 1.0}};
  const RealMatrix X = solve_lyapunov(A, W);
  CHECK((A * X + X * A.transpose() + W).norm() < 1e-12);
  CHECK_THROWS_AS(solve_lyapunov(RealMatrix::Identity(2, 2), W), NumericError);
}

TEST_CASE("sample_masses: truncation, determinism, moments") {
  std::size_t redraws = 0;
  const auto m = sample_masses(1.0, 0.5, 0.1, 4000, 3, &redraws);
  CHECK(redraws > 0);
  for (double x : m) CHECK(x >= 0.1);
  CHECK(sample_masses(1.0, 0.5, 0.1, 10, 3) == std::vector<double>(m.begin(), m.begin() + 10));
  const auto z = sample_masses(1.0, 0.0, 0.1, 5, 3);
  for (double x : z) CHECK(x == 1.0);
  double mean = 0.0, var = 0.0;
  const auto g = sample_masses(1.0, 0.1, 0.1, 20000, 4);
  for (double x : g) mean += x / g.size();
  for (double x : g) var += (x - mean) * (x - mean) / g.size();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.005));
  CHECK(var == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("lqr_gap_experiment: zero variance gives zero gaps") {
  LqrGapConfig cfg;
  cfg.sigma_m = {0.0};
  cfg.n_tasks = 4;
  cfg.K_max = 20;
  const LqrGapResult r = lqr_gap_experiment(cfg);
  for (double g : r.levels[0].mean_gap) CHECK(std::abs(g) <= 1e-10);
  CHECK(r.levels[0].sigma2 == 0.0);
}

TEST_CASE("lqr_gap_experiment: scaling-law fits at desk scale") {
  const LqrGapResult r = lqr_gap_experiment(LqrGapConfig{});
  for (const auto& l : r.levels) {
    CHECK(l.fit.r_squared >= 0.99);
    CHECK(l.mean_gap[0] == 0.0);
    for (std::size_t k = 1; k < l.mean_gap.size(); ++k) CHECK(l.mean_gap[k] >= l.mean_gap[k - 1]);
  }
  CHECK(r.asymptote_fit.slope > 0.0);
  CHECK(r.asymptote_fit.r_squared >= 0.95);
  CHECK(r.finite_fit.r_squared >= 0.95);
}

TEST_CASE("lqr_gap_experiment: beta scales with eta and matches the reported order") {
  LqrGapConfig cfg;
  cfg.sigma_m = {0.2};
  cfg.n_tasks = 32;
  cfg.eta = 0.075;
  const double b_big = lqr_gap_experiment(cfg).levels[0].fit.beta;
  cfg.eta = 0.0375;
  const double b_small = lqr_gap_experiment(cfg).levels[0].fit.beta;
  CHECK(b_big / b_small == doctest::Approx(2.0).epsilon(0.1));
  CHECK(b_big > 0.042 / 3.0);
  CHECK(b_big < 0.042 * 3.0);
}

TEST_CASE("Riccati gain separates tasks linearly near the mean mass") {
  const RealMatrix k0 = solve_care(msd(1.0)).K;
  std::vector<double> dm, dk;
  for (double d : {0.01, 0.02, 0.04, 0.06, 0.08, 0.1}) {
    dm.push_back(d);
    dk.push_back((solve_care(msd(1.0 + d)).K - k0).norm());
  }
  const LinearFit f = fit_linear(dm, dk);
  CHECK(f.slope > 0.0);
  CHECK(f.r_squared >= 0.99);
}
