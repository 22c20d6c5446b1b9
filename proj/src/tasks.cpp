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

#include "qmeta/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qmeta/error.hpp"
#include "qmeta/random.hpp"

namespace qmeta {

namespace {

constexpr double kPairLo = 0.8;
constexpr double kPairHi = 1.2;
constexpr int kQuadraturePoints = 1000;

double population_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

double values_mean(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

/// Variance of clamp(x u, lo, hi) for x ~ U[lo, hi], u ~ U[0.8, 1.2].
double paired_variance(const Range& r) {
  if (r.width() <= 0.0) return 0.0;
  double s1 = 0.0, s2 = 0.0;
  const double n = kQuadraturePoints;
  for (int i = 0; i < kQuadraturePoints; ++i) {
    const double x = r.lo + (i + 0.5) / n * r.width();
    for (int j = 0; j < kQuadraturePoints; ++j) {
      const double u = kPairLo + (j + 0.5) / n * (kPairHi - kPairLo);
      const double y = std::clamp(x * u, r.lo, r.hi);
      s1 += y;
      s2 += y * y;
    }
  }
  const double m = s1 / (n * n);
  return s2 / (n * n) - m * m;
}

}  // namespace

// ---------------------------------------------------------------------------
// TaskDistribution

std::vector<Range> TaskDistribution::support() const {
  std::vector<Range> out;
  if (!values.empty()) {
    const double m = values_mean(values);
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    out.push_back({m + diversity * (*lo - m), m + diversity * (*hi - m)});
    return out;
  }
  for (const Range& r : ranges) {
    const double half = 0.5 * diversity * r.width();
    out.push_back({r.mid() - half, r.mid() + half});
  }
  return out;
}

TaskParams TaskDistribution::mean() const {
  TaskParams t;
  t.kind = kind;
  if (!values.empty()) {
    t.values = {ood * values_mean(values)};
    return t;
  }
  for (const Range& r : ranges) t.values.push_back(ood * r.mid());
  return t;
}

void TaskDistribution::validate() const {
  if (!(diversity >= 0.0) || !std::isfinite(diversity)) throw ConfigError("diversity factor must be >= 0");
  if (!(ood >= 0.0) || !std::isfinite(ood)) throw ConfigError("ood factor must be >= 0");
  if (values.empty() && ranges.empty()) throw ConfigError("task distribution has no components");
  if (!values.empty() && kind != TaskParams::Kind::kCoupling)
    throw ConfigError("discrete value sets are only supported for coupling tasks");
  for (const Range& r : ranges)
    if (!(r.lo <= r.hi)) throw ConfigError("task range has lo > hi");
  if (correlated_pairs && ranges.size() != 4)
    throw ConfigError("correlated pairs need exactly 4 components");
  const auto sup = support();
  if (!bounds.empty() && bounds.size() != sup.size())
    throw ConfigError("task bounds must match the number of components");
  for (std::size_t i = 0; i < sup.size(); ++i) {
    const double lo = ood * sup[i].lo, hi = ood * sup[i].hi;
    const bool rates = kind == TaskParams::Kind::kNoiseRates;
    if (rates && lo < 0.0) {
      std::ostringstream os;
      os << "component " << i << " support [" << lo << ", " << hi << "] includes negative rates";
      throw ConfigError(os.str());
    }
    if (!rates && lo <= 0.0) throw ConfigError("coupling support must be positive");
    if (!bounds.empty() && (lo < bounds[i].lo || hi > bounds[i].hi)) {
      std::ostringstream os;
      os << "component " << i << " support [" << lo << ", " << hi << "] leaves bounds [" << bounds[i].lo
         << ", " << bounds[i].hi << "]";
      throw ConfigError(os.str());
    }
  }
}

TaskParams sample_task(const TaskDistribution& dist, std::uint64_t stream) {
  Rng rng(stream);
  TaskParams t;
  t.kind = dist.kind;
  const auto sup = dist.support();
  if (!dist.values.empty()) {
    const double m = values_mean(dist.values);
    const double v = dist.values[rng.below(dist.values.size())];
    t.values = {dist.ood * (m + dist.diversity * (v - m))};
    return t;
  }
  t.values.resize(sup.size());
  for (std::size_t i = 0; i < sup.size(); ++i) {
    if (dist.correlated_pairs && i >= 2) {
      const double y = std::clamp(t.values[i - 2] * rng.uniform(kPairLo, kPairHi), sup[i].lo, sup[i].hi);
      t.values[i] = y;
    } else {
      t.values[i] = rng.uniform(sup[i].lo, sup[i].hi);
    }
  }
  for (double& v : t.values) v *= dist.ood;
  return t;
}

std::vector<TaskParams> sample_tasks(const TaskDistribution& dist, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample_tasks needs n >= 1");
  dist.validate();
  std::vector<TaskParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_task(dist, stream_seed(seed, {i})));
  return out;
}

double task_variance(const TaskDistribution& dist) {
  const double o2 = dist.ood * dist.ood;
  if (!dist.values.empty()) return o2 * dist.diversity * dist.diversity * population_variance(dist.values);
  const auto sup = dist.support();
  double v = 0.0;
  for (std::size_t i = 0; i < sup.size(); ++i) {
    if (dist.correlated_pairs && i >= 2)
      v += paired_variance(sup[i]);
    else
      v += sup[i].width() * sup[i].width() / 12.0;
  }
  return o2 * v;
}

double task_variance(const std::vector<TaskParams>& samples) {
  if (samples.size() < 2) throw ConfigError("empirical task variance needs at least 2 samples");
  const std::size_t dim = samples.front().size();
  double total = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    double mean = 0.0;
    for (const auto& s : samples) {
      if (s.size() != dim) throw ShapeError("task samples have differing dimensions");
      mean += s[c];
    }
    mean /= static_cast<double>(samples.size());
    double ss = 0.0;
    for (const auto& s : samples) ss += (s[c] - mean) * (s[c] - mean);
    total += ss / static_cast<double>(samples.size() - 1);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Gates

ControlSchedule GateSpec::zero_schedule() const {
  return ControlSchedule::zeros(horizon, n_segments, n_controls(), amp_max);
}

void GateSpec::check_task(const TaskParams& xi) const {
  if (xi.kind != task_kind || xi.size() != task_dim)
    throw ConfigError(to_string(kind) + " expects " + std::to_string(task_dim) +
                      (task_kind == TaskParams::Kind::kCoupling ? " coupling" : " noise-rate") +
                      " task components");
  for (double v : xi.values)
    if (!std::isfinite(v)) throw ConfigError("non-finite task parameter");
  if (task_kind == TaskParams::Kind::kCoupling && xi[0] <= 0.0) throw ConfigError("coupling J must be > 0");
}

std::vector<ComplexVector> cz_input_states() {
  const double r = 1.0 / std::sqrt(2.0);
  const cplx i(0.0, 1.0);
  ComplexVector zero(2), one(2), plus(2), minus(2), plus_i(2), minus_i(2);
  zero << 1.0, 0.0;
  one << 0.0, 1.0;
  plus << r, r;
  minus << r, -r;
  plus_i << r, i * r;
  minus_i << r, -i * r;
  auto pair = [](const ComplexVector& a, const ComplexVector& b) {
    return ComplexVector(ops::kron(a, b));
  };
  return {pair(plus, plus),   pair(plus, minus),   pair(minus, plus), pair(minus, minus),
          pair(plus_i, plus_i), pair(plus_i, minus_i), pair(one, plus), pair(one, minus),
          pair(plus, one),    pair(minus, one),    pair(zero, zero),  pair(one, one)};
}

ComplexMatrix cz_unitary() {
  ComplexMatrix u = ComplexMatrix::Identity(4, 4);
  u(3, 3) = -1.0;
  return u;
}

namespace {

double or_default(double v, double d) { return v > 0.0 ? v : d; }

void add_two_qubit_jumps(QuantumSystem& s) {
  for (int q = 0; q < 2; ++q) {
    s.jumps.push_back({ops::on_qubit(ops::sigma_z(), q, 2) / std::sqrt(2.0), static_cast<std::size_t>(2 * q)});
    s.jumps.push_back({ops::on_qubit(ops::sigma_minus(), q, 2), static_cast<std::size_t>(2 * q + 1)});
  }
}

}  // namespace

GateSpec build_x_gate(const GateOptions& opts) {
  GateSpec g;
  g.kind = GateKind::kXGate;
  g.horizon = or_default(opts.horizon, 1.0);
  g.sim.dt = or_default(opts.dt, 0.005);
  g.amp_max = or_default(opts.amp_max, 10.0);
  g.n_segments = opts.n_segments > 0 ? opts.n_segments : 20;
  g.task_kind = TaskParams::Kind::kNoiseRates;
  g.task_dim = 2;
  g.control_names = {"u_x", "u_y"};

  QuantumSystem& s = g.system;
  s.dim = 2;
  s.drift = 0.5 * opts.omega_q * ops::sigma_z();
  s.controls = {ops::sigma_x(), ops::sigma_y()};
  s.jumps = {{ops::sigma_minus(), 0}, {ops::sigma_z() / std::sqrt(2.0), 1}};
  s.rate_map = [](const TaskParams& xi) {
    if (xi.size() != 2) throw ConfigError("x-gate expects (G_deph, G_relax)");
    return std::vector<double>{xi[1], xi[0]};
  };
  s.validate();

  ComplexVector k0(2), k1(2);
  k0 << 1.0, 0.0;
  k1 << 0.0, 1.0;
  g.loss = LossSpec::state_transfer(DensityMatrix::pure(k0), DensityMatrix::pure(k1));
  return g;
}

GateSpec build_cz(const GateOptions& opts) {
  if (!(opts.coupling > 0.0)) throw ConfigError("cz coupling J must be > 0");
  GateSpec g;
  g.kind = GateKind::kCz;
  g.horizon = or_default(opts.horizon, std::numbers::pi / (2.0 * opts.coupling));
  g.sim.dt = or_default(opts.dt, 0.01);
  g.amp_max = or_default(opts.amp_max, std::numbers::pi);
  g.n_segments = opts.n_segments > 0 ? opts.n_segments : 30;
  g.task_kind = TaskParams::Kind::kNoiseRates;
  g.task_dim = 4;
  g.control_names = {"u_x1", "u_y1", "u_x2", "u_y2", "u_z1", "u_z2"};
  g.grape_lr = 30.0;
  g.grape_init_scale = 0.5;

  QuantumSystem& s = g.system;
  s.dim = 4;
  s.drift = opts.coupling * ops::kron(ops::sigma_z(), ops::sigma_z());
  s.controls = {ops::on_qubit(ops::sigma_x(), 0, 2), ops::on_qubit(ops::sigma_y(), 0, 2),
                ops::on_qubit(ops::sigma_x(), 1, 2), ops::on_qubit(ops::sigma_y(), 1, 2),
                ops::on_qubit(ops::sigma_z(), 0, 2), ops::on_qubit(ops::sigma_z(), 1, 2)};
  add_two_qubit_jumps(s);
  s.rate_map = [](const TaskParams& xi) {
    if (xi.size() != 4) throw ConfigError("cz expects (G_deph1, G_relax1, G_deph2, G_relax2)");
    return xi.values;
  };
  s.validate();
  g.loss = LossSpec::gate(cz_unitary(), cz_input_states());
  return g;
}

GateSpec build_cz_tunable(const GateOptions& opts) {
  if (opts.fixed_dephasing < 0.0 || opts.fixed_relaxation < 0.0)
    throw ConfigError("fixed noise rates must be >= 0");
  GateSpec g;
  g.kind = GateKind::kCzTunable;
  g.horizon = or_default(opts.horizon, std::numbers::pi / 4.0);
  g.sim.dt = or_default(opts.dt, 0.01);
  g.amp_max = or_default(opts.amp_max, std::numbers::pi);
  g.n_segments = opts.n_segments > 0 ? opts.n_segments : 30;
  g.task_kind = TaskParams::Kind::kCoupling;
  g.task_dim = 1;
  g.control_names = {"u_x1", "u_y1", "u_z1", "u_x2", "u_y2", "u_z2", "u_zz"};
  g.grape_lr = 30.0;
  g.grape_init_scale = 0.5;

  QuantumSystem& s = g.system;
  s.dim = 4;
  const ComplexMatrix zz = ops::kron(ops::sigma_z(), ops::sigma_z());
  s.drift = ComplexMatrix::Zero(4, 4);
  s.task_drift = {{zz, 0}};
  for (int q = 0; q < 2; ++q)
    for (const auto& p : {ops::sigma_x(), ops::sigma_y(), ops::sigma_z()}) s.controls.push_back(ops::on_qubit(p, q, 2));
  s.controls.push_back(zz);
  add_two_qubit_jumps(s);
  const double gd = opts.fixed_dephasing, gr = opts.fixed_relaxation;
  s.rate_map = [gd, gr](const TaskParams& xi) {
    if (xi.size() != 1 || !(xi[0] > 0.0)) throw ConfigError("cz-tunable expects a coupling J > 0");
    return std::vector<double>{gd, gr, gd, gr};
  };
  s.validate();
  g.loss = LossSpec::gate(cz_unitary(), cz_input_states());
  return g;
}

GateSpec build_gate(GateKind kind, const GateOptions& opts) {
  switch (kind) {
    case GateKind::kXGate: return build_x_gate(opts);
    case GateKind::kCz: return build_cz(opts);
    case GateKind::kCzTunable: return build_cz_tunable(opts);
  }
  throw ConfigError("unknown gate kind");
}

TaskDistribution x_gate_distribution() {
  TaskDistribution d;
  d.kind = TaskParams::Kind::kNoiseRates;
  d.ranges = {{0.02, 0.15}, {0.01, 0.08}};
  d.bounds = {{0.0, 1.0}, {0.0, 1.0}};
  return d;
}

TaskDistribution cz_distribution() {
  TaskDistribution d;
  d.kind = TaskParams::Kind::kNoiseRates;
  d.ranges = {{1e-4, 1e-3}, {5e-5, 5e-4}, {1e-4, 1e-3}, {5e-5, 5e-4}};
  d.correlated_pairs = true;
  d.bounds = {{0.0, 0.1}, {0.0, 0.1}, {0.0, 0.1}, {0.0, 0.1}};
  return d;
}

TaskDistribution cz_tunable_distribution() {
  TaskDistribution d;
  d.kind = TaskParams::Kind::kCoupling;
  d.values = {1.0, 3.0, 6.0, 9.0};
  d.bounds = {{1e-3, 100.0}};
  return d;
}

TaskDistribution default_distribution(GateKind kind) {
  switch (kind) {
    case GateKind::kXGate: return x_gate_distribution();
    case GateKind::kCz: return cz_distribution();
    case GateKind::kCzTunable: return cz_tunable_distribution();
  }
  throw ConfigError("unknown gate kind");
}

}  // namespace qmeta
