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

// Task distributions and the three gate calibration problems.

#pragma once

#include <cstdint>
#include <vector>

#include "qmeta/gate_kind.hpp"
#include "qmeta/gradient.hpp"
#include "qmeta/quantum.hpp"

namespace qmeta {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
};

/// Per-component uniform ranges scaled about their midpoints by `diversity`,
/// then multiplied by `ood`. With `correlated_pairs`, components 2 and 3 are
/// components 0 and 1 times Uniform[0.8, 1.2], clamped to their support.
/// A non-empty `values` list makes the single component uniform over it.
struct TaskDistribution {
  TaskParams::Kind kind = TaskParams::Kind::kNoiseRates;
  std::vector<Range> ranges;
  std::vector<double> values;
  double diversity = 1.0;
  double ood = 1.0;
  bool correlated_pairs = false;
  std::vector<Range> bounds;

  std::size_t dim() const { return values.empty() ? ranges.size() : 1; }
  /// Sampling range of each component before the ood factor.
  std::vector<Range> support() const;
  /// Mean task (ood applied).
  TaskParams mean() const;
  /// Throws ConfigError when the scaled support leaves `bounds`.
  void validate() const;
};

/// i.i.d. tasks; task i uses the stream keyed by (seed, i).
std::vector<TaskParams> sample_tasks(const TaskDistribution& dist, std::size_t n, std::uint64_t seed);
TaskParams sample_task(const TaskDistribution& dist, std::uint64_t stream);

/// Sum of per-component variances.
double task_variance(const TaskDistribution& dist);
/// Sum of unbiased per-component sample variances.
double task_variance(const std::vector<TaskParams>& samples);

struct GateOptions {
  double omega_q = 1.0;
  double coupling = 2.0;
  double horizon = 0.0;  // 0 selects the gate default
  double dt = 0.0;
  double amp_max = 0.0;
  int n_segments = 0;
  double fixed_dephasing = 0.005;
  double fixed_relaxation = 0.0025;
};

struct GateSpec {
  GateKind kind = GateKind::kXGate;
  QuantumSystem system;
  LossSpec loss;
  double horizon = 1.0;
  double amp_max = 1.0;
  int n_segments = 20;
  SimConfig sim;
  TaskParams::Kind task_kind = TaskParams::Kind::kNoiseRates;
  std::size_t task_dim = 2;
  std::vector<std::string> control_names;
  /// Plain gradient-descent step and init half-width used by GRAPE.
  double grape_lr = 5.0;
  double grape_init_scale = 0.1;

  int n_controls() const { return static_cast<int>(system.n_controls()); }
  ControlSchedule zero_schedule() const;
  /// Throws ConfigError when xi does not belong to this gate's task space.
  void check_task(const TaskParams& xi) const;
};

/// H = (omega_q/2) Z + u_x X + u_y Y; |0> -> |1>; xi = (G_deph, G_relax).
GateSpec build_x_gate(const GateOptions& opts = {});
/// H = J ZZ + single-qubit drives (x1, y1, x2, y2, z1, z2); 12-state CZ loss;
/// xi = (G_deph1, G_relax1, G_deph2, G_relax2).
GateSpec build_cz(const GateOptions& opts = {});
/// H = (J + u_zz) ZZ + drives (x1, y1, z1, x2, y2, z2, zz); xi = (J).
GateSpec build_cz_tunable(const GateOptions& opts = {});
GateSpec build_gate(GateKind kind, const GateOptions& opts = {});

/// The twelve product input states of the CZ loss.
std::vector<ComplexVector> cz_input_states();
ComplexMatrix cz_unitary();

/// Training distributions.
TaskDistribution x_gate_distribution();
TaskDistribution cz_distribution();
TaskDistribution cz_tunable_distribution();
TaskDistribution default_distribution(GateKind kind);

}  // namespace qmeta
