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

// Dense open-system dynamics: density matrices, the Lindblad generator and
// RK4 propagation under piecewise-constant controls.
//
// Superoperators act on column-major vectorized density matrices, i.e.
// vec(A X B) = (B^T (x) A) vec(X). Eigen's default storage order is
// column-major, so a d x d matrix and its d^2 vector share one buffer.

#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmeta/error.hpp"

namespace qmeta {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

/// Task parameters. Noise-rate tasks carry (deph, relax) per qubit; coupling
/// tasks carry the static ZZ strength J.
struct TaskParams {
  enum class Kind { kNoiseRates, kCoupling };
  Kind kind = Kind::kNoiseRates;
  std::vector<double> values;

  static TaskParams noise(std::vector<double> rates) {
    return {Kind::kNoiseRates, std::move(rates)};
  }
  static TaskParams coupling(double j) { return {Kind::kCoupling, {j}}; }

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values.at(i); }
};

double task_distance(const TaskParams& a, const TaskParams& b);

namespace ops {

ComplexMatrix sigma_x();
ComplexMatrix sigma_y();
ComplexMatrix sigma_z();
/// |0><1|
ComplexMatrix sigma_minus();
ComplexMatrix identity(Eigen::Index dim);
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);
/// Embeds a single-qubit operator on `qubit` (0 = leftmost factor) of an
/// `n_qubits` register.
ComplexMatrix on_qubit(const ComplexMatrix& op, int qubit, int n_qubits);
ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix ket_to_density(const ComplexVector& ket);

bool is_hermitian(const ComplexMatrix& m, double tol = 1e-10);

}  // namespace ops

/// Hermitian, unit-trace, numerically PSD state.
class DensityMatrix {
 public:
  static constexpr double kHermitianTol = 1e-10;
  static constexpr double kTraceTol = 1e-9;
  static constexpr double kPsdTol = 1e-8;

  DensityMatrix() = default;
  /// Validates the invariants; throws ConfigError when violated.
  explicit DensityMatrix(ComplexMatrix mat);

  static DensityMatrix pure(const ComplexVector& ket);
  static DensityMatrix maximally_mixed(Eigen::Index dim);
  /// Wraps a propagated state without eigenvalue checks. Used on integrator
  /// outputs, which are monitored for drift separately.
  static DensityMatrix unchecked(ComplexMatrix mat);

  const ComplexMatrix& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }
  double purity() const;
  cplx operator()(Eigen::Index r, Eigen::Index c) const { return mat_(r, c); }

 private:
  ComplexMatrix mat_;
};

struct JumpOperator {
  ComplexMatrix op;           // normalized jump operator
  std::size_t rate_index = 0; // position in the rate vector returned by rate_map
};

/// Drift contribution scaled by one task-parameter component, e.g. J * ZZ.
struct TaskDriftTerm {
  ComplexMatrix op;
  std::size_t param_index = 0;
};

/// Generator of Lindblad dynamics:
///   H(xi, u) = drift + sum_t xi[t.index] t.op + sum_k u_k controls[k]
///   rho' = -i[H, rho] + sum_j rate_j(xi) D[L_j] rho
struct QuantumSystem {
  Eigen::Index dim = 2;
  ComplexMatrix drift;
  std::vector<TaskDriftTerm> task_drift;
  std::vector<ComplexMatrix> controls;
  std::vector<JumpOperator> jumps;
  /// Per-jump rates Gamma_j(xi). Must return jumps.size() entries.
  std::function<std::vector<double>(const TaskParams&)> rate_map;

  std::size_t n_controls() const { return controls.size(); }
  /// Drift Hamiltonian including task-dependent terms.
  ComplexMatrix drift_hamiltonian(const TaskParams& xi) const;
  /// Rates after validation; throws ConfigError on negative or non-finite.
  std::vector<double> jump_rates(const TaskParams& xi) const;
  /// Checks Hermiticity of every Hamiltonian and operator dimensions.
  void validate() const;
};

/// Piecewise-constant controls: amplitudes(segment, control).
struct ControlSchedule {
  double horizon = 1.0;
  RealMatrix amplitudes;
  double amp_max = 1.0;

  Eigen::Index n_segments() const { return amplitudes.rows(); }
  Eigen::Index n_controls() const { return amplitudes.cols(); }
  double segment_duration() const { return horizon / static_cast<double>(n_segments()); }
  double max_abs() const;
  /// Throws ShapeError/ConfigError on bad geometry or out-of-bound entries.
  void validate(std::size_t expected_controls) const;

  static ControlSchedule zeros(double horizon, Eigen::Index n_segments,
                               Eigen::Index n_controls, double amp_max);
};

struct SimConfig {
  double dt = 0.005;

  /// ceil(segment / dt), at least 1.
  int substeps(double segment_duration) const;
  void validate(double segment_duration) const;
};

/// D[L]rho = L rho L^+ - 1/2 {L^+ L, rho}.
ComplexMatrix dissipator(const ComplexMatrix& jump, const ComplexMatrix& rho);
ComplexMatrix dissipator(const ComplexMatrix& jump, const DensityMatrix& rho);

/// Right-hand side of the master equation at control values `u`.
ComplexMatrix lindblad_rhs(const QuantumSystem& system, const TaskParams& xi,
                           const RealVector& u, const ComplexMatrix& rho);

/// Matrix of rho -> lindblad_rhs(rho, u = 0) on column-major vec(rho).
ComplexMatrix superoperator_matrix(const QuantumSystem& system, const TaskParams& xi);

/// Superoperator of rho -> -i[h, rho].
ComplexMatrix hamiltonian_superoperator(const ComplexMatrix& h);

struct PropagationResult {
  DensityMatrix final_state;
  /// States after every RK4 step, starting with rho0 (empty unless requested).
  std::vector<ComplexMatrix> trajectory;
  double max_trace_drift = 0.0;
  double max_hermiticity_error = 0.0;
};

/// Maximum tolerated |tr(rho) - 1| over a propagation.
inline constexpr double kTraceDriftLimit = 1e-6;

/// RK4 over the schedule horizon with ceil(segment/dt) substeps per segment.
/// Throws NumericError if the trace drifts beyond kTraceDriftLimit.
PropagationResult propagate(const QuantumSystem& system, const TaskParams& xi,
                            const ControlSchedule& schedule, const DensityMatrix& rho0,
                            const SimConfig& sim, bool record_trajectory = false);

/// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, with the
/// <psi|rho|psi> shortcut when either argument is pure.
double state_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

/// Leading eigenvector of a pure state (purity > 1 - 1e-9), else nullopt.
std::optional<ComplexVector> pure_state_ket(const DensityMatrix& rho);

}  // namespace qmeta
