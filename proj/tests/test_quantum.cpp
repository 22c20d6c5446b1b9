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
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "qmeta/quantum.hpp"
#include "qmeta/rk4.hpp"

using namespace qmeta;

namespace {

constexpr double kPi = std::numbers::pi;

ComplexVector ket(std::initializer_list<cplx> v) {
  ComplexVector k(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (cplx c : v) k(i++) = c;
  return k;
}

DensityMatrix random_state(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> n;
  ComplexMatrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = cplx(n(rng), n(rng));
  ComplexMatrix rho = a * a.adjoint();
  rho /= rho.trace();
  return DensityMatrix(0.5 * (rho + rho.adjoint()));
}

// (omega/2) sz + ux sx + uy sy with relaxation and dephasing jumps.
QuantumSystem qubit(double omega, double g_deph, double g_relax) {
  QuantumSystem s;
  s.dim = 2;
  s.drift = 0.5 * omega * ops::sigma_z();
  s.controls = {ops::sigma_x(), ops::sigma_y()};
  s.jumps = {{ops::sigma_minus(), 0}, {ops::sigma_z() / std::sqrt(2.0), 1}};
  s.rate_map = [g_deph, g_relax](const TaskParams&) { return std::vector<double>{g_relax, g_deph}; };
  return s;
}

// Rates read from xi = (deph, relax).
QuantumSystem qubit_task(double omega) {
  QuantumSystem s = qubit(omega, 0, 0);
  s.rate_map = [](const TaskParams& xi) { return std::vector<double>{xi[1], xi[0]}; };
  return s;
}

ControlSchedule constant_schedule(double horizon, int n_seg, double ux, double uy) {
  ControlSchedule c = ControlSchedule::zeros(horizon, n_seg, 2, 10.0);
  c.amplitudes.col(0).setConstant(ux);
  c.amplitudes.col(1).setConstant(uy);
  return c;
}

}  // namespace

TEST_CASE("dissipator: relaxation leaves the ground state dark") {
  const DensityMatrix g = DensityMatrix::pure(ket({1, 0}));
  CHECK(dissipator(ops::sigma_minus(), g).norm() == doctest::Approx(0.0));
}

TEST_CASE("dissipator: dephasing damps coherences at rate gamma") {
  const double gamma = 0.37;
  ComplexMatrix rho(2, 2);
  rho << 0.6, cplx(0.2, -0.1), cplx(0.2, 0.1), 0.4;
  const ComplexMatrix out = dissipator(std::sqrt(gamma / 2.0) * ops::sigma_z(), DensityMatrix(rho));
  CHECK(std::abs(out(0, 1) - (-gamma * rho(0, 1))) < 1e-14);
  CHECK(std::abs(out(0, 0)) < 1e-14);
}

TEST_CASE("dissipator: output is Hermitian and traceless") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = trial % 2 ? 4 : 2;
    ComplexMatrix l(d, d);
    for (Eigen::Index i = 0; i < l.size(); ++i) l(i) = cplx(n(rng), n(rng));
    const ComplexMatrix out = dissipator(l, random_state(rng, d));
    CHECK(std::abs(out.trace()) < 1e-10);
    CHECK((out - out.adjoint()).norm() < 1e-10);
  }
}

TEST_CASE("dissipator: dimension mismatch throws") {
  CHECK_THROWS_AS(dissipator(ops::sigma_z(), DensityMatrix::maximally_mixed(4)), ShapeError);
}

TEST_CASE("lindblad_rhs examples") {
  const TaskParams xi = TaskParams::noise({0.0, 0.0});
  SUBCASE("empty generator gives zero") {
    QuantumSystem s = qubit(0.0, 0.0, 0.0);
    s.jumps.clear();
    CHECK(lindblad_rhs(s, xi, RealVector::Zero(2), DensityMatrix::maximally_mixed(2).mat()).norm() == 0.0);
  }
  SUBCASE("commutator part is traceless") {
    const QuantumSystem s = qubit(1.3, 0.0, 0.0);
    RealVector u(2);
    u << 0.7, -0.4;
    const ComplexMatrix r = lindblad_rhs(s, xi, u, DensityMatrix::pure(ket({0.6, cplx(0, 0.8)})).mat());
    CHECK(std::abs(r.trace()) < 1e-14);
  }
  SUBCASE("dephasing on |+>") {
    const double g = 0.12;
    const QuantumSystem s = qubit(0.0, g, 0.0);
    const double r = 1.0 / std::sqrt(2.0);
    const ComplexMatrix d = lindblad_rhs(s, xi, RealVector::Zero(2), DensityMatrix::pure(ket({r, r})).mat());
    CHECK(std::abs(d(0, 1) - (-g * 0.5)) < 1e-14);
  }
  SUBCASE("negative rate is a configuration error") {
    QuantumSystem s = qubit(0.0, 0.0, 0.0);
    s.rate_map = [](const TaskParams&) { return std::vector<double>{-0.1, 0.0}; };
    CHECK_THROWS_AS(lindblad_rhs(s, xi, RealVector::Zero(2), DensityMatrix::maximally_mixed(2).mat()),
                    ConfigError);
  }
  SUBCASE("wrong control count") {
    const QuantumSystem s = qubit(0.0, 0.0, 0.0);
    CHECK_THROWS_AS(lindblad_rhs(s, xi, RealVector::Zero(3), DensityMatrix::maximally_mixed(2).mat()),
                    ShapeError);
  }
}

TEST_CASE("lindblad_rhs is linear in rho") {
  std::mt19937_64 rng(5);
  const QuantumSystem s = qubit(1.0, 0.1, 0.05);
  const TaskParams xi = TaskParams::noise({0.1, 0.05});
  RealVector u(2);
  u << 0.3, -1.1;
  const ComplexMatrix a = random_state(rng, 2).mat();
  const ComplexMatrix b = random_state(rng, 2).mat();
  const ComplexMatrix lhs = lindblad_rhs(s, xi, u, 0.3 * a + 0.7 * b);
  const ComplexMatrix rhs = 0.3 * lindblad_rhs(s, xi, u, a) + 0.7 * lindblad_rhs(s, xi, u, b);
  CHECK((lhs - rhs).norm() < 1e-14);
}

TEST_CASE("superoperator_matrix matches lindblad_rhs on random states") {
  std::mt19937_64 rng(11);
  QuantumSystem s;
  s.dim = 4;
  s.drift = 2.0 * ops::kron(ops::sigma_z(), ops::sigma_z());
  s.controls = {ops::on_qubit(ops::sigma_x(), 0, 2)};
  s.jumps = {{ops::on_qubit(ops::sigma_minus(), 0, 2), 0}, {ops::on_qubit(ops::sigma_z(), 1, 2), 1}};
  s.rate_map = [](const TaskParams& xi) { return xi.values; };
  const TaskParams xi = TaskParams::noise({0.3, 0.02});
  const ComplexMatrix sup = superoperator_matrix(s, xi);
  for (int t = 0; t < 10; ++t) {
    const DensityMatrix rho = random_state(rng, 4);
    const ComplexMatrix direct = lindblad_rhs(s, xi, RealVector::Zero(1), rho.mat());
    const ComplexVector via = sup * Eigen::Map<const ComplexVector>(rho.mat().data(), 16);
    CHECK((via - Eigen::Map<const ComplexVector>(direct.data(), 16)).norm() < 1e-10);
  }
}

TEST_CASE("superoperator_matrix: zero system and linearity in rates") {
  QuantumSystem zero = qubit(0.0, 0.0, 0.0);
  CHECK(superoperator_matrix(zero, TaskParams::noise({0, 0})).norm() == 0.0);

  const QuantumSystem s = qubit_task(1.0);
  const ComplexMatrix base = superoperator_matrix(s, TaskParams::noise({0.05, 0.03}));
  const double d1 = (superoperator_matrix(s, TaskParams::noise({0.06, 0.03})) - base).norm();
  const double d3 = (superoperator_matrix(s, TaskParams::noise({0.08, 0.03})) - base).norm();
  CHECK(d3 == doctest::Approx(3.0 * d1).epsilon(1e-12));
}

TEST_CASE("propagate: free evolution is the identity") {
  std::mt19937_64 rng(1);
  QuantumSystem s = qubit(0.0, 0.0, 0.0);
  const DensityMatrix rho0 = random_state(rng, 2);
  const auto r = propagate(s, TaskParams::noise({0, 0}), constant_schedule(1.0, 10, 0, 0), rho0, {0.005});
  CHECK((r.final_state.mat() - rho0.mat()).norm() == 0.0);
}

TEST_CASE("propagate: resonant pi pulse flips |0> to |1>") {
  const QuantumSystem s = qubit(0.0, 0.0, 0.0);
  const auto r = propagate(s, TaskParams::noise({0, 0}), constant_schedule(1.0, 20, kPi / 2, 0),
                           DensityMatrix::pure(ket({1, 0})), {0.005});
  CHECK(std::abs(r.final_state(1, 1).real() - 1.0) < 1e-8);
}

TEST_CASE("propagate: analytic decay oracles") {
  const double dt = 0.005;
  for (double gamma : {0.1, 0.5, 1.0}) {
    const double t = 1.0;
    {
      const QuantumSystem s = qubit(0.0, 0.0, gamma);
      const auto r = propagate(s, TaskParams::noise({0, gamma}), constant_schedule(t, 10, 0, 0),
                               DensityMatrix::pure(ket({0, 1})), {dt});
      const double expected = std::exp(-gamma * t);
      CHECK(std::abs(r.final_state(1, 1).real() - expected) / expected < 1e-6);
    }
    {
      const QuantumSystem s = qubit(0.0, gamma, 0.0);
      const double h = 1.0 / std::sqrt(2.0);
      const auto r = propagate(s, TaskParams::noise({gamma, 0}), constant_schedule(t, 10, 0, 0),
                               DensityMatrix::pure(ket({h, h})), {dt});
      const double expected = 0.5 * std::exp(-gamma * t);
      CHECK(std::abs(std::abs(r.final_state(0, 1)) - expected) / expected < 1e-6);
    }
  }
}

TEST_CASE("propagate: RK4 error shrinks at fourth order") {
  // Driven, dissipative qubit against a dense matrix-exponential reference.
  const QuantumSystem s = qubit(1.0, 0.3, 0.2);
  const TaskParams xi = TaskParams::noise({0.3, 0.2});
  const ControlSchedule sched = constant_schedule(1.0, 1, 2.5, -1.5);
  const DensityMatrix rho0 = DensityMatrix::pure(ket({1, 0}));
  ComplexMatrix gen = superoperator_matrix(s, xi);
  gen += 2.5 * hamiltonian_superoperator(ops::sigma_x()) - 1.5 * hamiltonian_superoperator(ops::sigma_y());
  const ComplexMatrix exact_prop = gen.exp();
  const ComplexVector exact = exact_prop * Eigen::Map<const ComplexVector>(rho0.mat().data(), 4);
  auto err = [&](double dt) {
    const auto r = propagate(s, xi, sched, rho0, {dt});
    return (Eigen::Map<const ComplexVector>(r.final_state.mat().data(), 4) - exact).norm();
  };
  const double e1 = err(0.1);
  const double e2 = err(0.05);
  const double order = std::log2(e1 / e2);
  MESSAGE("RK4 measured order " << order);
  CHECK(order >= 3.5);
}

TEST_CASE("propagate: trace, Hermiticity and linearity invariants") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> amp(-3.0, 3.0);
  const QuantumSystem s = qubit(1.0, 0.15, 0.08);
  const TaskParams xi = TaskParams::noise({0.15, 0.08});
  ControlSchedule sched = ControlSchedule::zeros(1.0, 20, 2, 10.0);
  for (Eigen::Index i = 0; i < sched.amplitudes.size(); ++i) sched.amplitudes(i) = amp(rng);
  const DensityMatrix a = random_state(rng, 2);
  const DensityMatrix b = random_state(rng, 2);
  const auto ra = propagate(s, xi, sched, a, {0.005}, true);
  CHECK(ra.max_trace_drift <= 1e-6);
  CHECK(ra.max_hermiticity_error <= 1e-8);
  CHECK(ra.trajectory.size() == 1 + 20 * 10);
  const auto rb = propagate(s, xi, sched, b, {0.005});
  const auto rmix = propagate(s, xi, sched, DensityMatrix(0.25 * a.mat() + 0.75 * b.mat()), {0.005});
  CHECK((rmix.final_state.mat() - (0.25 * ra.final_state.mat() + 0.75 * rb.final_state.mat())).norm() < 1e-8);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(ra.final_state.mat());
  CHECK(es.eigenvalues().minCoeff() > -1e-8);
}

TEST_CASE("propagate: deterministic and matches piecewise matrix exponentials") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> amp(-2.0, 2.0);
  const QuantumSystem s = qubit(1.0, 0.05, 0.02);
  const TaskParams xi = TaskParams::noise({0.05, 0.02});
  ControlSchedule sched = ControlSchedule::zeros(1.0, 5, 2, 10.0);
  for (Eigen::Index i = 0; i < sched.amplitudes.size(); ++i) sched.amplitudes(i) = amp(rng);
  const DensityMatrix rho0 = random_state(rng, 2);
  const auto r1 = propagate(s, xi, sched, rho0, {0.005});
  const auto r2 = propagate(s, xi, sched, rho0, {0.005});
  CHECK((r1.final_state.mat() - r2.final_state.mat()).norm() == 0.0);

  ComplexVector v = Eigen::Map<const ComplexVector>(rho0.mat().data(), 4);
  const ComplexMatrix base = superoperator_matrix(s, xi);
  for (Eigen::Index seg = 0; seg < 5; ++seg) {
    ComplexMatrix g = base + sched.amplitudes(seg, 0) * hamiltonian_superoperator(ops::sigma_x()) +
                      sched.amplitudes(seg, 1) * hamiltonian_superoperator(ops::sigma_y());
    v = (g * sched.segment_duration()).exp() * v;
  }
  CHECK((Eigen::Map<const ComplexVector>(r1.final_state.mat().data(), 4) - v).norm() < 1e-9);
}

TEST_CASE("propagate: validation errors") {
  const QuantumSystem s = qubit(1.0, 0, 0);
  const TaskParams xi = TaskParams::noise({0, 0});
  const DensityMatrix rho0 = DensityMatrix::pure(ket({1, 0}));
  CHECK_THROWS_AS(propagate(s, xi, ControlSchedule::zeros(1.0, 4, 3, 1.0), rho0, {0.005}), ShapeError);
  ControlSchedule big = constant_schedule(1.0, 4, 11.0, 0.0);
  CHECK_THROWS_AS(propagate(s, xi, big, rho0, {0.005}), ConfigError);
  CHECK_THROWS_AS(propagate(s, xi, constant_schedule(1.0, 4, 0, 0), rho0, {0.5}), ConfigError);
  CHECK_THROWS_AS(propagate(s, xi, constant_schedule(1.0, 4, 0, 0), rho0, {-1.0}), ConfigError);
}

TEST_CASE("propagate: trace drift is reported as a numerical error") {
  // A large generator with a coarse step makes RK4 blow up.
  QuantumSystem s = qubit(0.0, 0.0, 0.0);
  s.rate_map = [](const TaskParams&) { return std::vector<double>{400.0, 400.0}; };
  CHECK_THROWS_AS(propagate(s, TaskParams::noise({0, 0}), constant_schedule(1.0, 10, 0, 0),
                            DensityMatrix::pure(ket({0.6, 0.8})), {0.1}),
                  NumericError);
}

TEST_CASE("SimConfig substeps use ceil(segment / dt)") {
  CHECK(SimConfig{0.005}.substeps(1.0 / 60.0) == 4);
  CHECK(SimConfig{0.005}.substeps(0.05) == 10);
  CHECK(SimConfig{0.01}.substeps(kPi / 4 / 30) == 3);
}

TEST_CASE("state_fidelity examples") {
  const DensityMatrix z0 = DensityMatrix::pure(ket({1, 0}));
  const DensityMatrix z1 = DensityMatrix::pure(ket({0, 1}));
  CHECK(state_fidelity(z0, z0) == doctest::Approx(1.0));
  CHECK(state_fidelity(z0, z1) == doctest::Approx(0.0));
  CHECK(state_fidelity(DensityMatrix::maximally_mixed(2), z0) == doctest::Approx(0.5));
  CHECK(state_fidelity(z0, DensityMatrix::maximally_mixed(2)) == doctest::Approx(0.5));
}

TEST_CASE("state_fidelity: general branch is symmetric and matches the commuting case") {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 10; ++t) {
    const DensityMatrix a = random_state(rng, 4);
    const DensityMatrix b = random_state(rng, 4);
    const double fab = state_fidelity(a, b);
    CHECK(fab == doctest::Approx(state_fidelity(b, a)).epsilon(1e-9));
    CHECK(fab >= 0.0);
    CHECK(fab <= 1.0);
    CHECK(state_fidelity(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  }
  // Diagonal states: F = (sum sqrt(p q))^2.
  ComplexMatrix p = ComplexMatrix::Zero(2, 2), q = ComplexMatrix::Zero(2, 2);
  p(0, 0) = 0.7; p(1, 1) = 0.3; q(0, 0) = 0.2; q(1, 1) = 0.8;
  const double expected = std::pow(std::sqrt(0.14) + std::sqrt(0.24), 2);
  CHECK(state_fidelity(DensityMatrix(p), DensityMatrix(q)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("state_fidelity rejects non-PSD input") {
  ComplexMatrix bad = ComplexMatrix::Zero(2, 2);
  bad(0, 0) = 1.2;
  bad(1, 1) = -0.2;
  CHECK_THROWS_AS(DensityMatrix{bad}, ConfigError);
  CHECK_THROWS_AS(state_fidelity(DensityMatrix::unchecked(bad), DensityMatrix::maximally_mixed(2)),
                  ConfigError);
}
