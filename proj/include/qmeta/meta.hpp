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

// Inner-loop adaptation, first-order MAML, the fixed-average baseline, GRAPE,
// and adaptation-gap measurement.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmeta/optim.hpp"
#include "qmeta/policy.hpp"
#include "qmeta/tasks.hpp"

namespace qmeta {

struct AdaptConfig {
  int K = 5;
  double eta_in = 0.01;

  void validate() const;
};

/// Losses L(theta_0), ..., L(theta_K); fidelities are 1 - loss.
struct AdaptationTrace {
  std::vector<double> losses;
  std::vector<double> fidelities;
};

struct AdaptResult {
  RealVector theta;
  AdaptationTrace trace;
  /// Gradient at theta_K (empty unless requested).
  RealVector final_grad;
};

/// Loss of a policy on one task.
double policy_loss(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate);
GradResult policy_loss_and_grad(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate);

/// K plain gradient-descent steps on f from theta0. Throws NumericError
/// naming the step at which the loss became non-finite.
AdaptResult gradient_descent(const std::function<GradResult(const RealVector&)>& f,
                             const RealVector& theta0, int K, double eta, bool final_grad);

AdaptResult inner_adapt(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate,
                        const AdaptConfig& cfg, bool final_grad = false);

/// Largest eta_max / 2^j (j < 20) whose K-step trace on xi never increases.
double probe_stable_eta(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate, int K,
                        double eta_max);

enum class LrSchedule { kNone, kCosine };

struct MetaConfig {
  int iterations = 300;
  int tasks_per_batch = 8;
  OptimizerConfig optimizer;
  LrSchedule schedule = LrSchedule::kNone;
  double clip_norm = 1.0;
  int eval_every = 25;
  int val_tasks = 32;
  std::uint64_t seed = 0;
  double divergence_factor = 10.0;
  int divergence_patience = 50;

  void validate() const;
};

struct TrainLogRow {
  int iter = 0;
  double train_loss = 0.0;
  double val_pre = 0.0;
  double val_post = 0.0;
  double gap = 0.0;
  double grad_norm = 0.0;
  double val_fidelity = 0.0;
  bool validated = false;
};

struct TrainOptions {
  PolicyArch arch;
  std::optional<std::filesystem::path> log_path;
  std::optional<std::filesystem::path> checkpoint_path;
  int checkpoint_every = 0;
  std::optional<std::filesystem::path> resume_from;
  /// Stop before this iteration (checkpointing first), as if interrupted.
  int stop_at = -1;
  std::map<std::string, std::string> metadata;
  /// Called after every logged row (progress reporting).
  std::function<void(const TrainLogRow&)> on_row;
};

/// Flags divergence after `patience` consecutive losses above factor * initial.
class DivergenceGuard {
 public:
  DivergenceGuard(double factor, int patience) : factor_(factor), patience_(patience) {}

  /// Records one loss; returns true once the run counts as diverged.
  bool update(double loss);
  void restore(double initial, int count) {
    initial_ = initial;
    count_ = count;
  }
  double initial() const { return initial_; }
  int count() const { return count_; }

 private:
  double factor_;
  int patience_;
  double initial_ = std::numeric_limits<double>::quiet_NaN();
  int count_ = 0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<TrainLogRow> log;
  bool diverged = false;
  int iterations_done = 0;
};

inline const std::vector<std::string> kTrainLogHeader = {"iter", "train_loss", "val_pre", "val_post",
                                                         "gap", "grad_norm", "val_fidelity"};

/// First-order MAML: the outer gradient is the batch mean of the gradients
/// at each adapted theta_K.
TrainResult fomaml_train(const GateSpec& gate, const TaskDistribution& train_dist, const MetaConfig& meta,
                         const AdaptConfig& adapt, const TrainOptions& opts);

/// Same optimizer stack on the single mean task, no inner loop.
TrainResult train_fixed_average(const GateSpec& gate, const TaskDistribution& train_dist,
                                const MetaConfig& meta, const TrainOptions& opts);

struct GrapeConfig {
  int steps = 200;
  double lr = 1.0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  /// Stop once the gradient norm falls below this (0 disables).
  double grad_tol = 0.0;

  void validate() const;
};

struct GrapeResult {
  ControlSchedule schedule;
  /// Loss before every step, then the final loss.
  std::vector<double> losses;
  std::vector<double> grad_norms;
  int steps_run = 0;
  bool converged = false;

  double final_loss() const { return losses.back(); }
};

/// Seeded Uniform(-scale, scale) amplitudes. An all-zero start is a
/// stationary point of the state-transfer loss and is avoided.
ControlSchedule grape_initial_schedule(const GateSpec& gate, std::uint64_t seed, double scale);
ControlSchedule grape_initial_schedule(const GateSpec& gate, std::uint64_t seed);

/// Plain gradient descent with the gate's default step.
GrapeConfig default_grape_config(const GateSpec& gate, int steps = 200);

/// Gradient descent directly on amplitudes, clamped to amp_max after each step.
GrapeResult grape_optimize(const GateSpec& gate, const TaskParams& xi, const ControlSchedule& init,
                           const GrapeConfig& cfg);

struct GapCurve {
  std::vector<int> K;
  std::vector<double> mean_gap;
  std::vector<double> mean_fidelity;
  /// per_task[i][j] = L_i(theta_0) - L_i(theta_{K_j}).
  std::vector<std::vector<double>> per_task;
  std::vector<TaskParams> tasks;
  /// Full loss traces up to max K.
  std::vector<std::vector<double>> traces;
};

/// Builds the curve from per-task loss traces (prefix property).
GapCurve gap_from_traces(const std::vector<int>& K_list, std::vector<std::vector<double>> traces);

GapCurve adaptation_gap(const PolicyParams& params, const GateSpec& gate, const std::vector<TaskParams>& tasks,
                        const std::vector<int>& K_list, const AdaptConfig& adapt);
GapCurve adaptation_gap(const PolicyParams& params, const GateSpec& gate, const TaskDistribution& eval_dist,
                        const std::vector<int>& K_list, const AdaptConfig& adapt, std::size_t n_tasks,
                        std::uint64_t seed);

/// Keys for task streams.
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kValidationStream = 2;

}  // namespace qmeta
