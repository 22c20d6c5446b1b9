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
#include <numbers>

#include "doctest.h"
#include "qmeta/error.hpp"
#include "qmeta/io.hpp"
#include "qmeta/meta.hpp"
#include "qmeta/parallel.hpp"

using namespace qmeta;

namespace {

PolicyArch tiny_arch() { return PolicyArch{3, 16, 2, 20, 2, 1.0}; }

MetaConfig tiny_meta(int iterations) {
  MetaConfig m;
  m.iterations = iterations;
  m.tasks_per_batch = 4;
  m.optimizer = {OptimizerKind::kAdam, 1e-2};
  m.eval_every = 5;
  m.val_tasks = 4;
  m.seed = 17;
  return m;
}

bool bit_equal(const RealVector& a, const RealVector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::filesystem::path temp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("inner_adapt: K = 0 and eta = 0 leave parameters unchanged") {
  const GateSpec g = build_x_gate();
  const PolicyParams p = init_params(1, tiny_arch());
  const TaskParams xi = TaskParams::noise({0.05, 0.02});
  const AdaptResult r0 = inner_adapt(p, xi, g, {0, 0.01});
  CHECK(bit_equal(r0.theta, p.theta));
  CHECK(r0.trace.losses.size() == 1);
  const AdaptResult r1 = inner_adapt(p, xi, g, {4, 0.0});
  CHECK(bit_equal(r1.theta, p.theta));
  CHECK(r1.trace.losses.size() == 5);
  CHECK(r1.trace.fidelities[2] == doctest::Approx(1.0 - r1.trace.losses[2]));
  CHECK_THROWS_AS(inner_adapt(p, xi, g, {-1, 0.01}), ConfigError);
}

TEST_CASE("inner_adapt: descent from a good initialization on a noiseless task") {
  const GateSpec g = build_x_gate();
  TrainOptions o;
  o.arch = tiny_arch();
  const TrainResult fa = train_fixed_average(g, x_gate_distribution(), tiny_meta(60), o);
  const TaskParams xi = TaskParams::noise({0.0, 0.0});
  const AdaptResult r = inner_adapt(fa.params, xi, g, {5, 0.01});
  CHECK(r.trace.losses.back() < r.trace.losses.front());
}

TEST_CASE("gradient_descent reports the failing step") {
  auto f = [](const RealVector& x) {
    GradResult r;
    r.loss = x(0) > 2.5 ? std::nan("") : x(0) * x(0);
    r.grad = RealVector::Constant(1, -1.0);
    return r;
  };
  try {
    gradient_descent(f, RealVector::Zero(1), 5, 1.0, false);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}

TEST_CASE("probe_stable_eta returns a step with a monotone trace") {
  const GateSpec g = build_x_gate();
  const PolicyParams p = init_params(4, tiny_arch());
  const TaskParams xi = TaskParams::noise({0.1, 0.05});
  const double eta = probe_stable_eta(p, xi, g, 5, 1e3);
  const auto losses = inner_adapt(p, xi, g, {5, eta}).trace.losses;
  for (std::size_t k = 1; k < losses.size(); ++k) CHECK(losses[k] <= losses[k - 1]);
}

TEST_CASE("DivergenceGuard counts consecutive excursions") {
  DivergenceGuard guard(10.0, 3);
  CHECK_FALSE(guard.update(0.1));
  CHECK_FALSE(guard.update(2.0));
  CHECK_FALSE(guard.update(2.0));
  CHECK_FALSE(guard.update(0.5));
  CHECK(guard.count() == 0);
  CHECK_FALSE(guard.update(1.5));
  CHECK_FALSE(guard.update(1.5));
  CHECK(guard.update(1.5));
}

TEST_CASE("fomaml_train: zero iterations return the initialization") {
  TrainOptions o;
  o.arch = tiny_arch();
  const TrainResult r = fomaml_train(build_x_gate(), x_gate_distribution(), tiny_meta(0), {3, 0.01}, o);
  CHECK(bit_equal(r.params.theta, init_params(17, tiny_arch()).theta));
  CHECK(r.log.empty());
}

TEST_CASE("fomaml_train: training lowers the loss, is deterministic, and thread-count independent") {
  const GateSpec g = build_x_gate();
  TrainOptions o;
  o.arch = tiny_arch();
  set_thread_count(1);
  const TrainResult a = fomaml_train(g, x_gate_distribution(), tiny_meta(30), {3, 0.01}, o);
  const TrainResult b = fomaml_train(g, x_gate_distribution(), tiny_meta(30), {3, 0.01}, o);
  set_thread_count(3);
  const TrainResult c = fomaml_train(g, x_gate_distribution(), tiny_meta(30), {3, 0.01}, o);
  set_thread_count(1);
  CHECK(bit_equal(a.params.theta, b.params.theta));
  CHECK(bit_equal(a.params.theta, c.params.theta));
  CHECK(a.log.back().train_loss < 0.5 * a.log.front().train_loss);
  CHECK(a.log.front().validated);
  CHECK(a.log.back().validated);
  CHECK_FALSE(a.diverged);
}

TEST_CASE("fomaml_train: resume from a checkpoint equals an uninterrupted run") {
  const GateSpec g = build_x_gate();
  MetaConfig m = tiny_meta(10);
  m.schedule = LrSchedule::kCosine;
  m.optimizer.kind = OptimizerKind::kAdamW;
  m.optimizer.weight_decay = 1e-3;
  const auto log_a = temp("qmeta_meta_a.csv"), log_b = temp("qmeta_meta_b.csv"), ckpt = temp("qmeta_meta.ckpt");
  TrainOptions full;
  full.arch = tiny_arch();
  full.log_path = log_a;
  const TrainResult a = fomaml_train(g, x_gate_distribution(), m, {2, 0.01}, full);

  TrainOptions part = full;
  part.log_path = log_b;
  part.checkpoint_path = ckpt;
  part.stop_at = 4;
  fomaml_train(g, x_gate_distribution(), m, {2, 0.01}, part);
  CHECK(load_checkpoint(ckpt).metadata.at("next_iteration") == "4");
  TrainOptions rest = part;
  rest.stop_at = -1;
  rest.resume_from = ckpt;
  const TrainResult b = fomaml_train(g, x_gate_distribution(), m, {2, 0.01}, rest);
  CHECK(bit_equal(a.params.theta, b.params.theta));
  CHECK(io::read_file(log_a) == io::read_file(log_b));
  const auto rows = io::parse_csv(io::read_file(log_a));
  CHECK(rows.size() == 11);
  CHECK(rows[0] == kTrainLogHeader);

  TrainOptions wrong = rest;
  wrong.arch.hidden_dim = 8;
  CHECK_THROWS_AS(fomaml_train(g, x_gate_distribution(), m, {2, 0.01}, wrong), ConfigError);
  for (const auto& p : {log_a, log_b, ckpt}) std::filesystem::remove(p);
}

TEST_CASE("train_fixed_average: matches fomaml with K = 0 on a zero-width distribution") {
  const GateSpec g = build_x_gate();
  TaskDistribution point = x_gate_distribution();
  point.diversity = 0.0;
  TrainOptions o;
  o.arch = tiny_arch();
  const MetaConfig m = tiny_meta(15);
  const TrainResult fa = train_fixed_average(g, point, m, o);
  const TrainResult fo = fomaml_train(g, point, m, {0, 0.01}, o);
  CHECK((fa.params.theta - fo.params.theta).norm() <= 1e-9 * fa.params.theta.norm());
  const TaskParams mean = x_gate_distribution().mean();
  CHECK(policy_loss(fa.params, mean, g) < policy_loss(init_params(m.seed, o.arch), mean, g));
}

TEST_CASE("training rejects mismatched architectures") {
  TrainOptions o;
  o.arch = tiny_arch();
  o.arch.feature_dim = 4;
  CHECK_THROWS_AS(fomaml_train(build_x_gate(), x_gate_distribution(), tiny_meta(1), {1, 0.01}, o), ConfigError);
  o.arch = tiny_arch();
  o.arch.output_scale = 20.0;
  CHECK_THROWS_AS(fomaml_train(build_x_gate(), x_gate_distribution(), tiny_meta(1), {1, 0.01}, o), ConfigError);
}

TEST_CASE("grape_optimize: noiseless X gate reaches 0.999 within 200 steps") {
  const GateSpec g = build_x_gate();
  const GrapeResult r = grape_optimize(g, TaskParams::noise({0.0, 0.0}), grape_initial_schedule(g, 1),
                                       default_grape_config(g, 200));
  CHECK(1.0 - r.final_loss() >= 0.999);
  CHECK(r.losses.size() == 201);
  CHECK(r.schedule.max_abs() <= g.amp_max);
}

TEST_CASE("grape_optimize: zero learning rate and clamping") {
  const GateSpec g = build_x_gate();
  const ControlSchedule init = grape_initial_schedule(g, 2);
  GrapeConfig c = default_grape_config(g, 5);
  c.lr = 0.0;
  const GrapeResult r = grape_optimize(g, TaskParams::noise({0.05, 0.05}), init, c);
  CHECK(r.schedule.amplitudes == init.amplitudes);
  GateOptions tight;
  tight.amp_max = 0.3;
  const GateSpec gt = build_x_gate(tight);
  GrapeConfig big = default_grape_config(gt, 20);
  big.lr = 50.0;
  const GrapeResult rc = grape_optimize(gt, TaskParams::noise({0.0, 0.0}), grape_initial_schedule(gt, 2), big);
  CHECK(rc.schedule.max_abs() <= 0.3);
  CHECK(rc.schedule.max_abs() == doctest::Approx(0.3));
}

TEST_CASE("grape_optimize: warm-started per-task GRAPE beats the shared schedule") {
  GateOptions o;
  o.n_segments = 10;
  const GateSpec g = build_x_gate(o);
  const TaskDistribution d = x_gate_distribution();
  const GrapeResult shared = grape_optimize(g, d.mean(), grape_initial_schedule(g, 3), default_grape_config(g, 100));
  double f_shared = 0.0, f_task = 0.0;
  const auto tasks = sample_tasks(d, 4, 8);
  for (const auto& xi : tasks) {
    f_shared += 1.0 - evaluate_loss(g.system, xi, shared.schedule, g.loss, g.sim);
    f_task += 1.0 - grape_optimize(g, xi, shared.schedule, default_grape_config(g, 50)).final_loss();
  }
  CHECK(f_task > f_shared);
}

TEST_CASE("adaptation_gap: G_0 = 0 and the prefix property") {
  const GateSpec g = build_x_gate();
  const PolicyParams p = init_params(5, tiny_arch());
  const auto tasks = sample_tasks(x_gate_distribution(), 3, 4);
  const GapCurve c = adaptation_gap(p, g, tasks, {0, 1, 3, 6}, {0, 0.05});
  for (const auto& row : c.per_task) CHECK(row[0] == 0.0);
  CHECK(c.mean_gap[0] == 0.0);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto direct = inner_adapt(p, tasks[i], g, {3, 0.05}).trace.losses;
    CHECK(c.traces[i][3] == direct[3]);
    CHECK(c.per_task[i][2] == direct[0] - direct[3]);
  }
  CHECK(c.mean_gap[3] > 0.0);
  CHECK_THROWS_AS(adaptation_gap(p, g, tasks, {1, 3}, {0, 0.05}), ConfigError);
  CHECK_THROWS_AS(adaptation_gap(p, g, tasks, {0, 3, 2}, {0, 0.05}), ConfigError);
  CHECK_THROWS_AS(adaptation_gap(p, g, std::vector<TaskParams>{}, {0, 1}, {0, 0.05}), ConfigError);
}

TEST_CASE("adaptation_gap: vanishes at the training mean for a trained initialization") {
  const GateSpec g = build_x_gate();
  TrainOptions o;
  o.arch = tiny_arch();
  const TrainResult fa = train_fixed_average(g, x_gate_distribution(), tiny_meta(80), o);
  TaskDistribution point = x_gate_distribution();
  point.diversity = 0.0;
  const GapCurve c = adaptation_gap(fa.params, g, point, {0, 5, 10}, {0, 0.01}, 4, 1);
  for (double gk : c.mean_gap) CHECK(std::abs(gk) < 1e-3);
}

TEST_CASE("inner loops are monotone below the probed step size") {
  const GateSpec g = build_x_gate();
  const PolicyParams p = init_params(9, tiny_arch());
  const auto tasks = sample_tasks(x_gate_distribution(), 20, 12);
  const double eta = probe_stable_eta(p, x_gate_distribution().mean(), g, 5, 1.0);
  int monotone = 0;
  for (const auto& xi : tasks) {
    const auto losses = inner_adapt(p, xi, g, {5, eta}).trace.losses;
    bool ok = true;
    for (std::size_t k = 1; k < losses.size(); ++k) ok = ok && losses[k] <= losses[k - 1];
    monotone += ok ? 1 : 0;
  }
  CHECK(monotone >= 19);
}
