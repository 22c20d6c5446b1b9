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

// Final-time infidelity loss and its exact gradient through the discrete RK4
// map. The reverse pass replays every stored step, so the result is the
// derivative of the integrator actually used, not of the continuous flow.

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "qmeta/quantum.hpp"

namespace qmeta {

/// loss = 1 - mean_k F(rho_k(T), target_k) over paired inputs and targets.
struct LossSpec {
  std::vector<DensityMatrix> inputs;
  std::vector<DensityMatrix> targets;

  static LossSpec state_transfer(DensityMatrix input, DensityMatrix target);
  /// Targets are unitary|psi_k> for every input ket.
  static LossSpec gate(const ComplexMatrix& unitary, const std::vector<ComplexVector>& input_kets);

  std::size_t size() const { return inputs.size(); }
  void validate(Eigen::Index dim) const;
};

struct GradResult {
  double loss = 0.0;
  RealVector grad;
  std::vector<double> fidelities;
};

/// Gradient with respect to schedule amplitudes, same shape as amplitudes.
struct ScheduleGradResult {
  double loss = 0.0;
  RealMatrix grad;
  std::vector<double> fidelities;
};

/// Differentiable map from a flat parameter vector to a schedule.
class ScheduleMap {
 public:
  virtual ~ScheduleMap() = default;
  virtual std::size_t param_count() const = 0;
  virtual ControlSchedule forward(const RealVector& params) const = 0;
  /// Vector-Jacobian product: d loss / d params given d loss / d amplitudes.
  virtual RealVector pullback(const RealVector& params, const RealMatrix& schedule_grad) const = 0;
};

/// Parameters are the amplitudes themselves, flattened segment-major
/// (index = segment * n_controls + control). This is the GRAPE map.
class DirectScheduleMap final : public ScheduleMap {
 public:
  DirectScheduleMap(double horizon, Eigen::Index n_segments, Eigen::Index n_controls,
                    double amp_max);

  std::size_t param_count() const override;
  ControlSchedule forward(const RealVector& params) const override;
  RealVector pullback(const RealVector& params, const RealMatrix& schedule_grad) const override;

  static RealVector flatten(const ControlSchedule& schedule);

 private:
  double horizon_;
  Eigen::Index n_segments_;
  Eigen::Index n_controls_;
  double amp_max_;
};

/// Loss without gradient. Accepts mixed targets (general fidelity formula).
double evaluate_loss(const QuantumSystem& system, const TaskParams& xi,
                     const ControlSchedule& schedule, const LossSpec& spec, const SimConfig& sim,
                     std::vector<double>* fidelities = nullptr);

/// Loss and d loss / d amplitudes. Every target must be pure; a mixed target
/// raises ConfigError ("not differentiable").
ScheduleGradResult schedule_loss_and_grad(const QuantumSystem& system, const TaskParams& xi,
                                          const ControlSchedule& schedule, const LossSpec& spec,
                                          const SimConfig& sim);

GradResult loss_and_grad(const QuantumSystem& system, const TaskParams& xi, const ScheduleMap& map,
                         const RealVector& params, const LossSpec& spec, const SimConfig& sim);

double loss_at(const QuantumSystem& system, const TaskParams& xi, const ScheduleMap& map,
               const RealVector& params, const LossSpec& spec, const SimConfig& sim);

inline constexpr double kDefaultFdStep = 1e-5;

/// Central differences of a scalar function. Throws NumericError when the
/// step vanishes against any coordinate.
RealVector finite_diff_grad(const std::function<double(const RealVector&)>& f, const RealVector& x,
                            double step = kDefaultFdStep);

RealVector finite_diff_grad(const QuantumSystem& system, const TaskParams& xi,
                            const ScheduleMap& map, const RealVector& params, const LossSpec& spec,
                            const SimConfig& sim, double step = kDefaultFdStep);

}  // namespace qmeta
