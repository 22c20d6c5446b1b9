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
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "qmeta/error.hpp"
#include "qmeta/policy.hpp"
#include "qmeta/random.hpp"

using namespace qmeta;

namespace {

PolicyArch small_arch() {
  PolicyArch a;
  a.feature_dim = 3;
  a.hidden_dim = 6;
  a.hidden_layers = 2;
  a.n_segments = 4;
  a.n_controls = 2;
  a.output_scale = 1.5;
  return a;
}

RealVector feats(double a, double b, double c) {
  RealVector f(3);
  f << a, b, c;
  return f;
}

bool bit_equal(const RealVector& a, const RealVector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("task_features normalizations") {
  const RealVector f = task_features(TaskParams::noise({0.1, 0.05}), GateKind::kXGate);
  CHECK(f.size() == 3);
  CHECK((f - RealVector::Ones(3)).norm() < 1e-15);
  CHECK(task_features(TaskParams::noise({0, 0}), GateKind::kXGate).norm() == 0.0);
  const RealVector g = task_features(TaskParams::noise({0.1, 0.05, 0.1, 0.05}), GateKind::kCz);
  CHECK((g - RealVector::Ones(4)).norm() < 1e-15);
  CHECK(task_features(TaskParams::coupling(9.0), GateKind::kCzTunable)(0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(task_features(TaskParams::noise({0.1}), GateKind::kXGate), ConfigError);
  CHECK_THROWS_AS(task_features(TaskParams::coupling(1.0), GateKind::kCz), ConfigError);
  CHECK_THROWS_AS(parse_gate_kind("toffoli"), ConfigError);
  CHECK(parse_gate_kind(to_string(GateKind::kCzTunable)) == GateKind::kCzTunable);
}

TEST_CASE("PolicyArch parameter count") {
  const PolicyArch a = small_arch();
  CHECK(a.param_count() == static_cast<std::size_t>((3 * 6 + 6) + (6 * 6 + 6) + (6 * 8 + 8)));
  PolicyArch bad = a;
  bad.hidden_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("forward: zero weights give a zero schedule") {
  PolicyParams p{small_arch(), RealVector::Zero(static_cast<Eigen::Index>(small_arch().param_count()))};
  const ControlSchedule s = forward(p, feats(0.3, 0.2, 0.1), 1.0, 10.0);
  CHECK(s.amplitudes.rows() == 4);
  CHECK(s.amplitudes.cols() == 2);
  CHECK(s.amplitudes.norm() == 0.0);
}

TEST_CASE("forward: amplitudes stay strictly inside output_scale") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    PolicyParams p = init_params(static_cast<std::uint64_t>(trial), small_arch());
    p.theta *= rng.uniform(0.5, 20.0);
    const RealMatrix a = forward_amplitudes(p, feats(rng.uniform(-3, 3), rng.uniform(-3, 3), 1.0));
    CHECK(a.cwiseAbs().maxCoeff() <= small_arch().output_scale);
    CHECK(a.allFinite());
  }
}

TEST_CASE("forward: shape and configuration errors") {
  const PolicyParams p = init_params(1, small_arch());
  CHECK_THROWS_AS(forward_amplitudes(p, RealVector::Zero(2)), ShapeError);
  CHECK_THROWS_AS(forward(p, feats(0, 0, 0), 1.0, 1.0), ConfigError);
  PolicyParams short_p = p;
  short_p.theta.conservativeResize(p.theta.size() - 1);
  CHECK_THROWS_AS(forward_amplitudes(short_p, feats(0, 0, 0)), ShapeError);
}

TEST_CASE("policy_vjp matches central differences") {
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const PolicyParams p = init_params(100 + static_cast<std::uint64_t>(trial), small_arch());
    const RealVector f = feats(rng.uniform(-1, 2), rng.uniform(-1, 2), rng.uniform(-1, 2));
    RealMatrix cot(4, 2);
    for (Eigen::Index i = 0; i < cot.size(); ++i) cot(i) = rng.normal();
    auto scalar = [&](const RealVector& th) {
      return (forward_amplitudes(PolicyParams{p.arch, th}, f).cwiseProduct(cot)).sum();
    };
    const RealVector g = policy_vjp(p, f, cot);
    const RealVector fd = finite_diff_grad(scalar, p.theta);
    worst = std::max(worst, (g - fd).lpNorm<Eigen::Infinity>());
  }
  MESSAGE("worst absolute VJP mismatch " << worst);
  CHECK(worst <= 1e-6);
}

TEST_CASE("PolicyScheduleMap: end-to-end loss gradient matches central differences") {
  QuantumSystem s;
  s.dim = 2;
  s.drift = 0.5 * ops::sigma_z();
  s.controls = {ops::sigma_x(), ops::sigma_y()};
  s.jumps = {{ops::sigma_minus(), 1}, {ops::sigma_z() / std::sqrt(2.0), 0}};
  s.rate_map = [](const TaskParams& xi) { return xi.values; };
  ComplexVector k0 = ComplexVector::Zero(2), k1 = ComplexVector::Zero(2);
  k0(0) = 1.0;
  k1(1) = 1.0;
  const LossSpec spec = LossSpec::state_transfer(DensityMatrix::pure(k0), DensityMatrix::pure(k1));
  const TaskParams xi = TaskParams::noise({0.05, 0.03});
  const PolicyScheduleMap map(small_arch(), task_features(xi, GateKind::kXGate), 1.0, 10.0);
  const PolicyParams p = init_params(3, small_arch());
  const RealVector theta = 3.0 * p.theta;
  const auto r = loss_and_grad(s, xi, map, theta, spec, {0.01});
  const RealVector fd = finite_diff_grad(s, xi, map, theta, spec, {0.01});
  CHECK((r.grad - fd).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("init_params: deterministic per seed") {
  const PolicyParams a = init_params(42, small_arch());
  const PolicyParams b = init_params(42, small_arch());
  const PolicyParams c = init_params(43, small_arch());
  CHECK(bit_equal(a.theta, b.theta));
  CHECK((a.theta - c.theta).norm() > 0.1);
  CHECK(a.theta.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
}

TEST_CASE("init_params: initial amplitudes are small on average") {
  for (const auto& [arch, f] :
       {std::pair{PolicyArch{3, 128, 2, 60, 2, 1.0}, feats(1.0, 1.0, 1.0)},
        std::pair{PolicyArch{4, 256, 4, 30, 6, std::acos(-1.0)}, RealVector(RealVector::Constant(4, 0.005))}}) {
    double mean_max = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
      mean_max += forward_amplitudes(init_params(seed, arch), f).cwiseAbs().maxCoeff();
    mean_max /= 100.0;
    MESSAGE("mean max |amp| / output_scale = " << mean_max / arch.output_scale);
    CHECK(mean_max < 0.5 * arch.output_scale);
  }
}

TEST_CASE("checkpoint: bit-exact round trip") {
  Checkpoint c;
  c.params = init_params(9, small_arch());
  c.params.theta(0) = -0.0;
  c.params.theta(1) = 4.9e-324;
  c.params.theta(2) = 1.0 / 3.0;
  c.seed = 0xfedcba9876543210ULL;
  c.metadata = {{"iteration", "120"}, {"preset", "x-gate"}, {"note", "a=b, spaces ok"}};
  c.sections["adam_m"] = RealVector::LinSpaced(7, -1.0, 1.0);
  c.sections["adam_v"] = RealVector::Constant(3, 1e-300);
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint d = deserialize_checkpoint(bytes);
  CHECK(bit_equal(c.params.theta, d.params.theta));
  CHECK(std::signbit(d.params.theta(0)));
  CHECK(d.params.arch == c.params.arch);
  CHECK(d.seed == c.seed);
  CHECK(d.metadata == c.metadata);
  CHECK(bit_equal(d.sections.at("adam_m"), c.sections.at("adam_m")));
  CHECK(bit_equal(d.sections.at("adam_v"), c.sections.at("adam_v")));
  CHECK(serialize_checkpoint(d) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "qmeta_test_policy.ckpt";
  save_checkpoint(path, c);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: corruption and version errors") {
  Checkpoint c;
  c.params = init_params(1, small_arch());
  const std::string bytes = serialize_checkpoint(c);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), FormatError);
  std::string old = bytes;
  old.replace(old.find("version=1"), 9, "version=7");
  CHECK_THROWS_AS(deserialize_checkpoint(old), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint("hello"), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), FormatError);
  c.metadata["bad\nkey"] = "x";
  CHECK_THROWS_AS(serialize_checkpoint(c), ConfigError);
}
