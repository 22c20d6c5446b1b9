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

#include "qmeta/gradient.hpp"

#include <cmath>
#include <sstream>

#include "qmeta/rk4.hpp"

namespace qmeta {

namespace {

constexpr cplx kI{0.0, 1.0};

struct Geometry {
  Eigen::Index d = 0;
  int n_sub = 0;
  double h = 0.0;
};

Geometry prepare(const QuantumSystem& system, const ControlSchedule& schedule,
                 const LossSpec& spec, const SimConfig& sim) {
  schedule.validate(system.n_controls());
  spec.validate(system.dim);
  const double seg = schedule.segment_duration();
  sim.validate(seg);
  Geometry g;
  g.d = system.dim;
  g.n_sub = sim.substeps(seg);
  g.h = seg / g.n_sub;
  return g;
}

ComplexMatrix stacked_inputs(const LossSpec& spec) {
  std::vector<ComplexMatrix> rhos;
  rhos.reserve(spec.size());
  for (const auto& r : spec.inputs) rhos.push_back(r.mat());
  return rk4::stack(rhos);
}

void check_final(const ComplexMatrix& states, Eigen::Index d) {
  for (Eigen::Index b = 0; b < states.cols(); ++b) {
    Eigen::Map<const ComplexMatrix> rho(states.col(b).data(), d, d);
    const double drift = std::abs(rho.trace() - cplx(1.0));
    if (drift > kTraceDriftLimit) {
      std::ostringstream os;
      os << "trace drift " << drift << " exceeds " << kTraceDriftLimit << "; reduce dt";
      throw NumericError(os.str());
    }
  }
}

void throw_non_finite(const char* phase, Eigen::Index segment, int substep) {
  std::ostringstream os;
  os << "non-finite value during " << phase << " at segment " << segment << ", substep "
     << substep;
  throw NumericError(os.str());
}

}  // namespace

// ---------------------------------------------------------------------------
// LossSpec

LossSpec LossSpec::state_transfer(DensityMatrix input, DensityMatrix target) {
  LossSpec s;
  s.inputs.push_back(std::move(input));
  s.targets.push_back(std::move(target));
  return s;
}

LossSpec LossSpec::gate(const ComplexMatrix& unitary, const std::vector<ComplexVector>& input_kets) {
  LossSpec s;
  for (const auto& ket : input_kets) {
    if (ket.size() != unitary.rows()) throw ShapeError("input ket dimension differs from unitary");
    s.inputs.push_back(DensityMatrix::pure(ket));
    s.targets.push_back(DensityMatrix::pure(unitary * ket));
  }
  return s;
}

void LossSpec::validate(Eigen::Index dim) const {
  if (inputs.empty()) throw ConfigError("loss spec needs at least one input state");
  if (inputs.size() != targets.size()) throw ShapeError("loss spec inputs and targets differ in count");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].dim() != dim || targets[i].dim() != dim)
      throw ShapeError("loss spec state dimension differs from system");
  }
}

// ---------------------------------------------------------------------------
// DirectScheduleMap

DirectScheduleMap::DirectScheduleMap(double horizon, Eigen::Index n_segments,
                                     Eigen::Index n_controls, double amp_max)
    : horizon_(horizon), n_segments_(n_segments), n_controls_(n_controls), amp_max_(amp_max) {}

std::size_t DirectScheduleMap::param_count() const {
  return static_cast<std::size_t>(n_segments_ * n_controls_);
}

ControlSchedule DirectScheduleMap::forward(const RealVector& params) const {
  if (static_cast<std::size_t>(params.size()) != param_count())
    throw ShapeError("direct schedule map: parameter count mismatch");
  ControlSchedule s{horizon_, RealMatrix(n_segments_, n_controls_), amp_max_};
  for (Eigen::Index i = 0; i < n_segments_; ++i)
    for (Eigen::Index k = 0; k < n_controls_; ++k) s.amplitudes(i, k) = params(i * n_controls_ + k);
  return s;
}

RealVector DirectScheduleMap::pullback(const RealVector& params, const RealMatrix& schedule_grad) const {
  if (static_cast<std::size_t>(params.size()) != param_count() ||
      schedule_grad.rows() != n_segments_ || schedule_grad.cols() != n_controls_)
    throw ShapeError("direct schedule map: gradient shape mismatch");
  RealVector g(params.size());
  for (Eigen::Index i = 0; i < n_segments_; ++i)
    for (Eigen::Index k = 0; k < n_controls_; ++k) g(i * n_controls_ + k) = schedule_grad(i, k);
  return g;
}

RealVector DirectScheduleMap::flatten(const ControlSchedule& schedule) {
  const Eigen::Index nc = schedule.n_controls();
  RealVector v(schedule.amplitudes.size());
  for (Eigen::Index i = 0; i < schedule.n_segments(); ++i)
    for (Eigen::Index k = 0; k < nc; ++k) v(i * nc + k) = schedule.amplitudes(i, k);
  return v;
}

// ---------------------------------------------------------------------------
// Loss evaluation

double evaluate_loss(const QuantumSystem& system, const TaskParams& xi,
                     const ControlSchedule& schedule, const LossSpec& spec, const SimConfig& sim,
                     std::vector<double>* fidelities) {
  const Geometry g = prepare(system, schedule, spec, sim);
  const rk4::Generator gen = rk4::make_generator(system, xi);
  ComplexMatrix states = stacked_inputs(spec);
  rk4::Workspace ws;
  ws.resize(states.rows(), states.cols());
  ComplexMatrix s;
  for (Eigen::Index seg = 0; seg < schedule.n_segments(); ++seg) {
    gen.assemble(schedule.amplitudes.row(seg).transpose(), s);
    for (int sub = 0; sub < g.n_sub; ++sub) rk4::step(s, g.h, states, ws);
    if (!states.allFinite()) throw_non_finite("forward pass", seg, g.n_sub - 1);
  }
  check_final(states, g.d);

  double mean_f = 0.0;
  if (fidelities) fidelities->clear();
  for (std::size_t b = 0; b < spec.size(); ++b) {
    Eigen::Map<const ComplexMatrix> rho(states.col(static_cast<Eigen::Index>(b)).data(), g.d, g.d);
    // Pure targets use the same unclamped overlap as the gradient path.
    double f = 0.0;
    if (auto phi = pure_state_ket(spec.targets[b])) {
      f = (phi->adjoint() * rho * (*phi))(0, 0).real();
    } else {
      f = state_fidelity(DensityMatrix::unchecked(rho), spec.targets[b]);
    }
    if (fidelities) fidelities->push_back(f);
    mean_f += f;
  }
  return 1.0 - mean_f / static_cast<double>(spec.size());
}

ScheduleGradResult schedule_loss_and_grad(const QuantumSystem& system, const TaskParams& xi,
                                          const ControlSchedule& schedule, const LossSpec& spec,
                                          const SimConfig& sim) {
  const Geometry g = prepare(system, schedule, spec, sim);
  const Eigen::Index d = g.d;
  const Eigen::Index n_seg = schedule.n_segments();
  const std::size_t batch = spec.size();
  const double h = g.h;

  std::vector<ComplexVector> target_kets;
  target_kets.reserve(batch);
  for (const auto& t : spec.targets) {
    auto ket = pure_state_ket(t);
    if (!ket) throw ConfigError("mixed-state target: fidelity gradient is not differentiable");
    target_kets.push_back(std::move(*ket));
  }

  const rk4::Generator gen = rk4::make_generator(system, xi);
  std::vector<ComplexMatrix> gens(static_cast<std::size_t>(n_seg));
  for (Eigen::Index seg = 0; seg < n_seg; ++seg)
    gen.assemble(schedule.amplitudes.row(seg).transpose(), gens[static_cast<std::size_t>(seg)]);

  // Forward, keeping the state at the start of every RK4 step.
  const std::size_t n_steps = static_cast<std::size_t>(n_seg) * static_cast<std::size_t>(g.n_sub);
  std::vector<ComplexMatrix> tape;
  tape.reserve(n_steps);
  ComplexMatrix states = stacked_inputs(spec);
  rk4::Workspace ws;
  ws.resize(states.rows(), states.cols());
  for (Eigen::Index seg = 0; seg < n_seg; ++seg) {
    const ComplexMatrix& s = gens[static_cast<std::size_t>(seg)];
    for (int sub = 0; sub < g.n_sub; ++sub) {
      tape.push_back(states);
      rk4::step(s, h, states, ws);
    }
    if (!states.allFinite()) throw_non_finite("forward pass", seg, g.n_sub - 1);
  }
  check_final(states, d);

  // Loss and its cotangent. For a real loss of complex z we carry
  // dL/dRe z + i dL/dIm z; for F = <phi|rho|phi> that is |phi><phi|.
  ScheduleGradResult result;
  result.fidelities.resize(batch);
  ComplexMatrix lambda(d * d, static_cast<Eigen::Index>(batch));
  double mean_f = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    Eigen::Map<const ComplexMatrix> rho(states.col(col).data(), d, d);
    const ComplexVector& phi = target_kets[b];
    const double f = (phi.adjoint() * rho * phi)(0, 0).real();
    result.fidelities[b] = f;
    mean_f += f;
    const ComplexMatrix proj = phi * phi.adjoint();
    lambda.col(col) = -inv_b * Eigen::Map<const ComplexVector>(proj.data(), d * d);
  }
  result.loss = 1.0 - mean_f * inv_b;

  // Reverse sweep. Control sensitivities use
  //   Re<g, vec(-i[H_k, A])> = Re tr(M H_k),  M = -i (A G^+ - G^+ A),
  // so one d x d accumulator per segment serves every control.
  result.grad = RealMatrix::Zero(n_seg, schedule.n_controls());
  ComplexMatrix sh, k, a2, a3, a4, g1, g2, g3, g4, ga;
  ComplexMatrix m_seg(d, d);
  auto accumulate = [&](const ComplexMatrix& a, const ComplexMatrix& gk) {
    for (Eigen::Index b = 0; b < a.cols(); ++b) {
      Eigen::Map<const ComplexMatrix> am(a.col(b).data(), d, d);
      Eigen::Map<const ComplexMatrix> gm(gk.col(b).data(), d, d);
      const ComplexMatrix gd = gm.adjoint();
      m_seg.noalias() += -kI * (am * gd - gd * am);
    }
  };

  std::size_t step_idx = n_steps;
  for (Eigen::Index seg = n_seg - 1; seg >= 0; --seg) {
    const ComplexMatrix& s = gens[static_cast<std::size_t>(seg)];
    sh = s.adjoint();
    m_seg.setZero();
    for (int sub = g.n_sub - 1; sub >= 0; --sub) {
      const ComplexMatrix& x = tape[--step_idx];
      k.noalias() = s * x;
      a2 = x + (0.5 * h) * k;
      k.noalias() = s * a2;
      a3 = x + (0.5 * h) * k;
      k.noalias() = s * a3;
      a4 = x + h * k;

      g4 = (h / 6.0) * lambda;
      g3 = (h / 3.0) * lambda;
      g2 = (h / 3.0) * lambda;
      g1 = (h / 6.0) * lambda;

      accumulate(a4, g4);
      ga.noalias() = sh * g4;
      lambda += ga;
      g3 += h * ga;

      accumulate(a3, g3);
      ga.noalias() = sh * g3;
      lambda += ga;
      g2 += (0.5 * h) * ga;

      accumulate(a2, g2);
      ga.noalias() = sh * g2;
      lambda += ga;
      g1 += (0.5 * h) * ga;

      accumulate(x, g1);
      ga.noalias() = sh * g1;
      lambda += ga;

      if (!lambda.allFinite()) throw_non_finite("reverse pass", seg, sub);
    }
    for (std::size_t c = 0; c < gen.control_hamiltonians.size(); ++c) {
      const ComplexMatrix& hk = gen.control_hamiltonians[c];
      result.grad(seg, static_cast<Eigen::Index>(c)) = (m_seg.cwiseProduct(hk.transpose())).sum().real();
    }
  }
  return result;
}

GradResult loss_and_grad(const QuantumSystem& system, const TaskParams& xi, const ScheduleMap& map,
                         const RealVector& params, const LossSpec& spec, const SimConfig& sim) {
  if (static_cast<std::size_t>(params.size()) != map.param_count())
    throw ShapeError("loss_and_grad: parameter count mismatch");
  if (!params.allFinite()) throw NumericError("loss_and_grad: non-finite parameters");
  const ControlSchedule schedule = map.forward(params);
  ScheduleGradResult sg = schedule_loss_and_grad(system, xi, schedule, spec, sim);
  GradResult out;
  out.loss = sg.loss;
  out.grad = map.pullback(params, sg.grad);
  out.fidelities = std::move(sg.fidelities);
  if (!std::isfinite(out.loss) || !out.grad.allFinite())
    throw NumericError("loss_and_grad: non-finite loss or gradient");
  return out;
}

double loss_at(const QuantumSystem& system, const TaskParams& xi, const ScheduleMap& map,
               const RealVector& params, const LossSpec& spec, const SimConfig& sim) {
  return evaluate_loss(system, xi, map.forward(params), spec, sim);
}

RealVector finite_diff_grad(const std::function<double(const RealVector&)>& f, const RealVector& x,
                            double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw NumericError("finite difference step must be positive");
  RealVector g(x.size());
  RealVector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    const double up = xi + step;
    const double dn = xi - step;
    if (up == xi || dn == xi) {
      std::ostringstream os;
      os << "finite difference step " << step << " underflows at coordinate " << i;
      throw NumericError(os.str());
    }
    probe(i) = up;
    const double fu = f(probe);
    probe(i) = dn;
    const double fd = f(probe);
    probe(i) = xi;
    g(i) = (fu - fd) / (up - dn);
  }
  return g;
}

RealVector finite_diff_grad(const QuantumSystem& system, const TaskParams& xi,
                            const ScheduleMap& map, const RealVector& params, const LossSpec& spec,
                            const SimConfig& sim, double step) {
  return finite_diff_grad(
      [&](const RealVector& p) { return loss_at(system, xi, map, p, spec, sim); }, params, step);
}

}  // namespace qmeta
