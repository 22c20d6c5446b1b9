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
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "qmeta/error.hpp"
#include "qmeta/random.hpp"
#include "qmeta/tasks.hpp"

using namespace qmeta;

namespace {

double uniform_var(double lo, double hi) { return (hi - lo) * (hi - lo) / 12.0; }

}  // namespace

TEST_CASE("sample_tasks: zero diversity collapses to the midpoint") {
  TaskDistribution d = x_gate_distribution();
  d.diversity = 0.0;
  for (const auto& t : sample_tasks(d, 20, 3)) {
    CHECK(t[0] == doctest::Approx(0.085).epsilon(1e-15));
    CHECK(t[1] == doctest::Approx(0.045).epsilon(1e-15));
  }
  CHECK(task_variance(d) == 0.0);
}

TEST_CASE("sample_tasks: unit diversity stays in the training range") {
  const auto tasks = sample_tasks(x_gate_distribution(), 5000, 11);
  for (const auto& t : tasks) {
    CHECK(t[0] >= 0.02);
    CHECK(t[0] <= 0.15);
    CHECK(t[1] >= 0.01);
    CHECK(t[1] <= 0.08);
  }
}

TEST_CASE("sample_tasks: ood factor multiplies every rate") {
  TaskDistribution base = cz_distribution();
  TaskDistribution ood = base;
  ood.ood = 10.0;
  const auto a = sample_tasks(base, 50, 7);
  const auto b = sample_tasks(ood, 50, 7);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(b[i][c] == doctest::Approx(10.0 * a[i][c]).epsilon(1e-14));
  for (const auto& t : b) {
    CHECK(t[0] >= 1e-3 * (1 - 1e-12));
    CHECK(t[0] <= 1e-2 * (1 + 1e-12));
    CHECK(t[1] >= 5e-4 * (1 - 1e-12));
    CHECK(t[1] <= 5e-3 * (1 + 1e-12));
  }
}

TEST_CASE("sample_tasks: correlated qubit rates stay within 20 percent") {
  for (const auto& t : sample_tasks(cz_distribution(), 2000, 5)) {
    for (int q = 0; q < 2; ++q) {
      const double r = t[2 + q] / t[q];
      const bool clamped = t[2 + q] == (q == 0 ? 1e-3 : 5e-4) || t[2 + q] == (q == 0 ? 1e-4 : 5e-5);
      CHECK((clamped || (r >= 0.8 - 1e-12 && r <= 1.2 + 1e-12)));
    }
  }
}

TEST_CASE("sample_tasks: determinism and errors") {
  const auto a = sample_tasks(x_gate_distribution(), 10, 42);
  const auto b = sample_tasks(x_gate_distribution(), 10, 42);
  const auto c = sample_tasks(x_gate_distribution(), 10, 43);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values == b[i].values);
  CHECK(a[0].values != c[0].values);
  // Prefix stability: task i does not depend on n.
  CHECK(sample_tasks(x_gate_distribution(), 3, 42)[2].values == a[2].values);
  CHECK_THROWS_AS(sample_tasks(x_gate_distribution(), 0, 1), ConfigError);
  TaskDistribution wide = x_gate_distribution();
  wide.diversity = 1.5;
  CHECK_THROWS_AS(sample_tasks(wide, 4, 1), ConfigError);
  TaskDistribution hot = x_gate_distribution();
  hot.ood = 20.0;
  CHECK_THROWS_AS(hot.validate(), ConfigError);
}

TEST_CASE("task_variance: analytic values") {
  const double expected = uniform_var(0.02, 0.15) + uniform_var(0.01, 0.08);
  CHECK(task_variance(x_gate_distribution()) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(task_variance(x_gate_distribution()) == doctest::Approx(1.817e-3).epsilon(1e-3));
  for (double d : {0.1, 0.5, 1.25}) {
    TaskDistribution s = x_gate_distribution();
    s.diversity = d;
    CHECK(task_variance(s) == doctest::Approx(d * d * expected).epsilon(1e-13));
  }
  TaskDistribution t = cz_tunable_distribution();
  CHECK(task_variance(t) == doctest::Approx((3.75 * 3.75 + 1.75 * 1.75 + 1.25 * 1.25 + 4.25 * 4.25) / 4).epsilon(1e-14));
}

TEST_CASE("task_variance: diversity scaling holds empirically") {
  const double base = task_variance(sample_tasks(x_gate_distribution(), 10000, 1));
  for (double d : {0.3, 0.7, 1.2}) {
    TaskDistribution s = x_gate_distribution();
    s.diversity = d;
    const double v = task_variance(sample_tasks(s, 10000, 2));
    CHECK(v == doctest::Approx(d * d * base).epsilon(0.05));
  }
}

TEST_CASE("task_variance: empirical matches analytic for every preset") {
  TaskDistribution cz_ood = cz_distribution();
  cz_ood.ood = 10.0;
  for (const TaskDistribution& d : {x_gate_distribution(), cz_distribution(), cz_ood, cz_tunable_distribution()}) {
    const double analytic = task_variance(d);
    const double empirical = task_variance(sample_tasks(d, 100000, 9));
    CHECK(empirical == doctest::Approx(analytic).epsilon(0.02));
  }
  CHECK_THROWS_AS(task_variance(std::vector<TaskParams>{TaskParams::noise({0.1, 0.1})}), ConfigError);
}

TEST_CASE("build_x_gate: structure") {
  const GateSpec g = build_x_gate();
  CHECK(g.n_controls() == 2);
  CHECK(g.system.jumps.size() == 2);
  CHECK(g.horizon == 1.0);
  CHECK(g.sim.dt == 0.005);
  CHECK(g.amp_max == 10.0);
  const TaskParams xi = TaskParams::noise({0.07, 0.03});
  const auto rates = g.system.jump_rates(xi);
  // sigma_minus carries G_relax, sigma_z / sqrt(2) carries G_deph.
  CHECK(rates[0] == 0.03);
  CHECK(rates[1] == 0.07);
  CHECK((g.system.jumps[1].op * std::sqrt(rates[1]) - std::sqrt(0.07 / 2) * ops::sigma_z()).norm() < 1e-15);
  CHECK_THROWS_AS(g.check_task(TaskParams::coupling(1.0)), ConfigError);
  CHECK_THROWS_AS(g.check_task(TaskParams::noise({0.1, 0.1, 0.1})), ConfigError);
}

TEST_CASE("build_cz: exact CZ has unit fidelity, identity has the |++> value") {
  const GateSpec g = build_cz();
  CHECK(g.n_controls() == 6);
  CHECK(g.loss.size() == 12);
  CHECK(g.horizon == doctest::Approx(std::numbers::pi / 4));
  const ComplexMatrix cz = cz_unitary();
  const auto kets = cz_input_states();
  double f = 0.0;
  for (std::size_t k = 0; k < kets.size(); ++k) {
    CHECK(std::abs(kets[k].norm() - 1.0) < 1e-15);
    f += state_fidelity(DensityMatrix::pure(cz * kets[k]), g.loss.targets[k]);
  }
  CHECK(f / 12.0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(state_fidelity(g.loss.inputs[0], g.loss.targets[0]) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("build_cz_tunable: reduces to the static-coupling drift") {
  const GateSpec t = build_cz_tunable();
  CHECK(t.n_controls() == 7);
  for (double j : {1.0, 2.0, 9.0}) {
    GateOptions o;
    o.coupling = j;
    const GateSpec c = build_cz(o);
    CHECK((t.system.drift_hamiltonian(TaskParams::coupling(j)) - c.system.drift).norm() < 1e-15);
  }
  const auto rates = t.system.jump_rates(TaskParams::coupling(3.0));
  CHECK(rates == std::vector<double>{0.005, 0.0025, 0.005, 0.0025});
  CHECK_THROWS_AS(t.check_task(TaskParams::coupling(-1.0)), ConfigError);
}

TEST_CASE("build_cz_tunable: free ZZ evolution matches a dense exponential") {
  const double j = 2.0, horizon = std::numbers::pi / 4;
  const ComplexMatrix zz = ops::kron(ops::sigma_z(), ops::sigma_z());
  const ComplexMatrix u = (ComplexMatrix(cplx(0, -j * horizon) * zz)).exp();
  const ComplexMatrix cz = cz_unitary();
  const auto kets = cz_input_states();

  GateOptions closed;
  closed.fixed_dephasing = 0.0;
  closed.fixed_relaxation = 0.0;
  const GateSpec g = build_cz_tunable(closed);
  double oracle = 0.0;
  for (const auto& k : kets) oracle += std::norm((cz * k).dot(u * k));
  oracle /= 12.0;
  const double loss = evaluate_loss(g.system, TaskParams::coupling(j), g.zero_schedule(), g.loss, g.sim);
  CHECK(1.0 - loss == doctest::Approx(oracle).epsilon(1e-9));

  // With the fixed noise rates, compare against exp(L T) on vectorized states.
  const GateSpec noisy = build_cz_tunable();
  const ComplexMatrix prop = (ComplexMatrix(horizon * superoperator_matrix(noisy.system, TaskParams::coupling(j)))).exp();
  double noisy_oracle = 0.0;
  for (const auto& k : kets) {
    const ComplexMatrix rho0 = k * k.adjoint();
    ComplexVector v = prop * Eigen::Map<const ComplexVector>(rho0.data(), 16);
    Eigen::Map<ComplexMatrix> rho(v.data(), 4, 4);
    const ComplexVector t = cz * k;
    noisy_oracle += (t.adjoint() * rho * t)(0, 0).real();
  }
  noisy_oracle /= 12.0;
  const double noisy_loss =
      evaluate_loss(noisy.system, TaskParams::coupling(j), noisy.zero_schedule(), noisy.loss, noisy.sim);
  CHECK(1.0 - noisy_loss == doctest::Approx(noisy_oracle).epsilon(1e-9));
}

TEST_CASE("built systems satisfy generator invariants over random tasks") {
  Rng rng(31);
  TaskDistribution cz_ood = cz_distribution();
  cz_ood.ood = 10.0;
  const std::vector<std::pair<GateSpec, TaskDistribution>> cases = {
      {build_x_gate(), x_gate_distribution()}, {build_cz(), cz_ood}, {build_cz_tunable(), cz_tunable_distribution()}};
  for (const auto& [g, dist] : cases) {
    for (const auto& xi : sample_tasks(dist, 100, rng.below(1000))) {
      g.check_task(xi);
      const ComplexMatrix h = g.system.drift_hamiltonian(xi);
      CHECK((h - h.adjoint()).norm() < 1e-14);
      for (double r : g.system.jump_rates(xi)) CHECK(r >= 0.0);
      for (const auto& c : g.system.controls) CHECK((c - c.adjoint()).norm() < 1e-14);
    }
  }
}

TEST_CASE("rate maps are monotone in every task component") {
  const GateSpec x = build_x_gate();
  const GateSpec cz = build_cz();
  for (const auto& [g, dim] : {std::pair{&x, 2}, std::pair{&cz, 4}}) {
    std::vector<double> base(static_cast<std::size_t>(dim), 0.01);
    const auto r0 = g->system.jump_rates(TaskParams::noise(base));
    for (int c = 0; c < dim; ++c) {
      auto up = base;
      up[static_cast<std::size_t>(c)] += 0.005;
      const auto r1 = g->system.jump_rates(TaskParams::noise(up));
      for (std::size_t j = 0; j < r0.size(); ++j) CHECK(r1[j] >= r0[j]);
    }
  }
}
