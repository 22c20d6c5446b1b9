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

#include "qmeta/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qmeta/rk4.hpp"

namespace qmeta {

namespace {

constexpr cplx kI{0.0, 1.0};

void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << " must be a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw ShapeError(os.str());
  }
}

void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << what << ": dimension mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows()
       << "x" << b.cols();
    throw ShapeError(os.str());
  }
}

Eigen::VectorXd hermitian_eigenvalues(const ComplexMatrix& m) {
  const ComplexMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

// Matrix square root of a Hermitian PSD matrix; negative eigenvalues clamp to 0.
ComplexMatrix psd_sqrt(const ComplexMatrix& m) {
  const ComplexMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

double task_distance(const TaskParams& a, const TaskParams& b) {
  if (a.size() != b.size()) throw ShapeError("task_distance: parameter length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

namespace ops {

ComplexMatrix sigma_x() {
  ComplexMatrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

ComplexMatrix sigma_y() {
  ComplexMatrix m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return m;
}

ComplexMatrix sigma_z() {
  ComplexMatrix m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

ComplexMatrix sigma_minus() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  return m;
}

ComplexMatrix identity(Eigen::Index dim) { return ComplexMatrix::Identity(dim, dim); }

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

ComplexMatrix on_qubit(const ComplexMatrix& op, int qubit, int n_qubits) {
  if (qubit < 0 || qubit >= n_qubits) throw ShapeError("on_qubit: qubit index out of range");
  ComplexMatrix out = ComplexMatrix::Identity(1, 1);
  for (int q = 0; q < n_qubits; ++q) out = kron(out, q == qubit ? op : identity(2));
  return out;
}

ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a * b - b * a;
}

ComplexMatrix ket_to_density(const ComplexVector& ket) { return ket * ket.adjoint(); }

bool is_hermitian(const ComplexMatrix& m, double tol) {
  return m.rows() == m.cols() && (m - m.adjoint()).norm() <= tol;
}

}  // namespace ops

// ---------------------------------------------------------------------------
// DensityMatrix

DensityMatrix::DensityMatrix(ComplexMatrix mat) : mat_(std::move(mat)) {
  require_square(mat_, "density matrix");
  if (!mat_.allFinite()) throw ConfigError("density matrix has non-finite entries");
  if ((mat_ - mat_.adjoint()).norm() > kHermitianTol)
    throw ConfigError("density matrix is not Hermitian");
  if (std::abs(mat_.trace() - cplx(1.0)) > kTraceTol)
    throw ConfigError("density matrix trace differs from 1");
  if (hermitian_eigenvalues(mat_).minCoeff() < -kPsdTol)
    throw ConfigError("density matrix has a negative eigenvalue");
}

DensityMatrix DensityMatrix::pure(const ComplexVector& ket) {
  const double n = ket.norm();
  if (n == 0.0) throw ConfigError("pure state from zero vector");
  return DensityMatrix(ops::ket_to_density(ket / n));
}

DensityMatrix DensityMatrix::maximally_mixed(Eigen::Index dim) {
  return DensityMatrix(ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim));
}

DensityMatrix DensityMatrix::unchecked(ComplexMatrix mat) {
  DensityMatrix out;
  out.mat_ = std::move(mat);
  return out;
}

double DensityMatrix::purity() const { return (mat_ * mat_).trace().real(); }

// ---------------------------------------------------------------------------
// QuantumSystem

ComplexMatrix QuantumSystem::drift_hamiltonian(const TaskParams& xi) const {
  ComplexMatrix h = drift;
  for (const auto& term : task_drift) {
    if (term.param_index >= xi.size())
      throw ShapeError("task drift term references a missing task component");
    h += xi[term.param_index] * term.op;
  }
  return h;
}

std::vector<double> QuantumSystem::jump_rates(const TaskParams& xi) const {
  if (jumps.empty()) return {};
  if (!rate_map) throw ConfigError("system has jump operators but no rate map");
  std::vector<double> rates = rate_map(xi);
  for (const auto& j : jumps) {
    if (j.rate_index >= rates.size()) throw ShapeError("rate map returned too few rates");
  }
  for (double r : rates) {
    if (!std::isfinite(r) || r < 0.0) {
      std::ostringstream os;
      os << "rate map produced an invalid rate " << r;
      throw ConfigError(os.str());
    }
  }
  return rates;
}

void QuantumSystem::validate() const {
  require_square(drift, "drift Hamiltonian");
  if (drift.rows() != dim) throw ShapeError("drift dimension differs from system dim");
  if (!ops::is_hermitian(drift)) throw ConfigError("drift Hamiltonian is not Hermitian");
  for (const auto& t : task_drift) {
    require_same_dim(drift, t.op, "task drift term");
    if (!ops::is_hermitian(t.op)) throw ConfigError("task drift term is not Hermitian");
  }
  for (const auto& h : controls) {
    require_same_dim(drift, h, "control Hamiltonian");
    if (!ops::is_hermitian(h)) throw ConfigError("control Hamiltonian is not Hermitian");
  }
  for (const auto& j : jumps) require_same_dim(drift, j.op, "jump operator");
}

// ---------------------------------------------------------------------------
// ControlSchedule / SimConfig

double ControlSchedule::max_abs() const {
  return amplitudes.size() == 0 ? 0.0 : amplitudes.cwiseAbs().maxCoeff();
}

void ControlSchedule::validate(std::size_t expected_controls) const {
  if (amplitudes.rows() == 0) throw ShapeError("schedule has no segments");
  if (static_cast<std::size_t>(amplitudes.cols()) != expected_controls) {
    std::ostringstream os;
    os << "schedule has " << amplitudes.cols() << " controls, system expects "
       << expected_controls;
    throw ShapeError(os.str());
  }
  if (!(horizon > 0.0)) throw ConfigError("schedule horizon must be positive");
  if (!amplitudes.allFinite()) throw NumericError("schedule has non-finite amplitudes");
  if (max_abs() > amp_max) {
    std::ostringstream os;
    os << "schedule amplitude " << max_abs() << " exceeds bound " << amp_max;
    throw ConfigError(os.str());
  }
}

ControlSchedule ControlSchedule::zeros(double horizon, Eigen::Index n_segments,
                                       Eigen::Index n_controls, double amp_max) {
  return {horizon, RealMatrix::Zero(n_segments, n_controls), amp_max};
}

int SimConfig::substeps(double segment_duration) const {
  // The 1e-9 slack keeps exact multiples (0.05 / 0.005) from rounding up.
  const double ratio = segment_duration / dt;
  return std::max(1, static_cast<int>(std::ceil(ratio - 1e-9)));
}

void SimConfig::validate(double segment_duration) const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (dt > segment_duration * (1.0 + 1e-12))
    throw ConfigError("dt exceeds the control segment duration");
}

// ---------------------------------------------------------------------------
// Generator pieces

ComplexMatrix dissipator(const ComplexMatrix& jump, const ComplexMatrix& rho) {
  require_same_dim(jump, rho, "dissipator");
  const ComplexMatrix ldl = jump.adjoint() * jump;
  return jump * rho * jump.adjoint() - 0.5 * (ldl * rho + rho * ldl);
}

ComplexMatrix dissipator(const ComplexMatrix& jump, const DensityMatrix& rho) {
  return dissipator(jump, rho.mat());
}

ComplexMatrix lindblad_rhs(const QuantumSystem& system, const TaskParams& xi,
                           const RealVector& u, const ComplexMatrix& rho) {
  if (static_cast<std::size_t>(u.size()) != system.n_controls())
    throw ShapeError("control vector length differs from the system's control count");
  require_same_dim(system.drift, rho, "lindblad_rhs");
  ComplexMatrix h = system.drift_hamiltonian(xi);
  for (std::size_t k = 0; k < system.n_controls(); ++k) h += u(static_cast<Eigen::Index>(k)) * system.controls[k];
  ComplexMatrix out = -kI * ops::commutator(h, rho);
  const std::vector<double> rates = system.jump_rates(xi);
  for (const auto& j : system.jumps) out += rates[j.rate_index] * dissipator(j.op, rho);
  return out;
}

ComplexMatrix hamiltonian_superoperator(const ComplexMatrix& h) {
  const ComplexMatrix id = ops::identity(h.rows());
  return -kI * (ops::kron(id, h) - ops::kron(h.transpose(), id));
}

namespace {

ComplexMatrix dissipator_superoperator(const ComplexMatrix& l) {
  const ComplexMatrix id = ops::identity(l.rows());
  const ComplexMatrix ldl = l.adjoint() * l;
  return ops::kron(l.conjugate(), l) - 0.5 * ops::kron(id, ldl) -
         0.5 * ops::kron(ldl.transpose(), id);
}

}  // namespace

ComplexMatrix superoperator_matrix(const QuantumSystem& system, const TaskParams& xi) {
  system.validate();
  ComplexMatrix s = hamiltonian_superoperator(system.drift_hamiltonian(xi));
  const std::vector<double> rates = system.jump_rates(xi);
  for (const auto& j : system.jumps) s += rates[j.rate_index] * dissipator_superoperator(j.op);
  return s;
}

// ---------------------------------------------------------------------------
// RK4 engine

namespace rk4 {

void Generator::assemble(const RealVector& u, ComplexMatrix& out) const {
  out = base;
  for (std::size_t k = 0; k < control_ops.size(); ++k) {
    const double uk = u(static_cast<Eigen::Index>(k));
    if (uk != 0.0) out += uk * control_ops[k];
  }
}

Generator make_generator(const QuantumSystem& system, const TaskParams& xi) {
  Generator g;
  g.dim = system.dim;
  g.base = superoperator_matrix(system, xi);
  g.control_ops.reserve(system.controls.size());
  for (const auto& h : system.controls) g.control_ops.push_back(hamiltonian_superoperator(h));
  g.control_hamiltonians = system.controls;
  return g;
}

void Workspace::resize(Eigen::Index rows, Eigen::Index cols) {
  k.resize(rows, cols);
  acc.resize(rows, cols);
  stage.resize(rows, cols);
}

void step(const ComplexMatrix& s, double h, ComplexMatrix& states, Workspace& ws) {
  ws.k.noalias() = s * states;                  // k1
  ws.acc = ws.k;
  ws.stage = states + (0.5 * h) * ws.k;
  ws.k.noalias() = s * ws.stage;                // k2
  ws.acc += 2.0 * ws.k;
  ws.stage = states + (0.5 * h) * ws.k;
  ws.k.noalias() = s * ws.stage;                // k3
  ws.acc += 2.0 * ws.k;
  ws.stage = states + h * ws.k;
  ws.k.noalias() = s * ws.stage;                // k4
  ws.acc += ws.k;
  states += (h / 6.0) * ws.acc;
}

ComplexMatrix stack(const std::vector<ComplexMatrix>& rhos) {
  if (rhos.empty()) throw ShapeError("no states to stack");
  const Eigen::Index d = rhos.front().rows();
  ComplexMatrix out(d * d, static_cast<Eigen::Index>(rhos.size()));
  for (std::size_t b = 0; b < rhos.size(); ++b) {
    if (rhos[b].rows() != d || rhos[b].cols() != d) throw ShapeError("stacked states differ in dimension");
    out.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const ComplexVector>(rhos[b].data(), d * d);
  }
  return out;
}

}  // namespace rk4

// ---------------------------------------------------------------------------
// propagate

PropagationResult propagate(const QuantumSystem& system, const TaskParams& xi,
                            const ControlSchedule& schedule, const DensityMatrix& rho0,
                            const SimConfig& sim, bool record_trajectory) {
  schedule.validate(system.n_controls());
  if (rho0.dim() != system.dim) throw ShapeError("initial state dimension differs from system");
  const double seg = schedule.segment_duration();
  sim.validate(seg);
  const int n_sub = sim.substeps(seg);
  const double h = seg / n_sub;
  const Eigen::Index d = system.dim;

  const rk4::Generator gen = rk4::make_generator(system, xi);
  ComplexMatrix states = rk4::stack({rho0.mat()});
  rk4::Workspace ws;
  ws.resize(states.rows(), 1);
  ComplexMatrix s;

  PropagationResult result;
  auto observe = [&](const ComplexMatrix& vec_state) {
    Eigen::Map<const ComplexMatrix> rho(vec_state.data(), d, d);
    result.max_trace_drift = std::max(result.max_trace_drift, std::abs(rho.trace() - cplx(1.0)));
    result.max_hermiticity_error =
        std::max(result.max_hermiticity_error, (rho - rho.adjoint()).norm());
    if (record_trajectory) result.trajectory.emplace_back(rho);
  };
  observe(states);
  for (Eigen::Index seg_i = 0; seg_i < schedule.n_segments(); ++seg_i) {
    gen.assemble(schedule.amplitudes.row(seg_i).transpose(), s);
    for (int sub = 0; sub < n_sub; ++sub) {
      rk4::step(s, h, states, ws);
      if (!states.allFinite()) {
        std::ostringstream os;
        os << "non-finite state in segment " << seg_i << ", substep " << sub;
        throw NumericError(os.str());
      }
      observe(states);
    }
  }
  if (result.max_trace_drift > kTraceDriftLimit) {
    std::ostringstream os;
    os << "trace drift " << result.max_trace_drift << " exceeds " << kTraceDriftLimit
       << "; reduce dt (currently " << sim.dt << ")";
    throw NumericError(os.str());
  }
  result.final_state = DensityMatrix::unchecked(Eigen::Map<const ComplexMatrix>(states.data(), d, d));
  return result;
}

// ---------------------------------------------------------------------------
// Fidelity

std::optional<ComplexVector> pure_state_ket(const DensityMatrix& rho) {
  if (rho.purity() <= 1.0 - 1e-9) return std::nullopt;
  const ComplexMatrix h = 0.5 * (rho.mat() + rho.mat().adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  return ComplexVector(es.eigenvectors().col(h.rows() - 1));
}

double state_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  require_same_dim(rho.mat(), sigma.mat(), "state_fidelity");
  for (const DensityMatrix* m : {&rho, &sigma}) {
    if (hermitian_eigenvalues(m->mat()).minCoeff() < -DensityMatrix::kPsdTol)
      throw ConfigError("state_fidelity: input is not positive semidefinite");
  }
  double f = 0.0;
  if (auto ket = pure_state_ket(sigma)) {
    f = (ket->adjoint() * rho.mat() * (*ket))(0, 0).real();
  } else if (auto ket_r = pure_state_ket(rho)) {
    f = (ket_r->adjoint() * sigma.mat() * (*ket_r))(0, 0).real();
  } else {
    const ComplexMatrix root = psd_sqrt(rho.mat());
    const Eigen::VectorXd ev = hermitian_eigenvalues(root * sigma.mat() * root);
    const double tr = ev.cwiseMax(0.0).cwiseSqrt().sum();
    f = tr * tr;
  }
  return std::clamp(f, 0.0, 1.0);
}

}  // namespace qmeta
