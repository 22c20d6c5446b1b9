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

// Scaling-law fits, corollary thresholds and numeric checks of the
// regularity assumptions (PL, Lipschitz dynamics, separated optima).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qmeta/meta.hpp"

namespace qmeta {

/// G(K) = c (1 - exp(-beta K)).
struct ScalingFit {
  double c = 0.0;
  double beta = 0.0;
  /// NaN when the data have no variance.
  double r_squared = 0.0;
  std::size_t n_points = 0;
  /// Set when every G is zero; c and beta are then 0.
  bool degenerate = false;

  double predict(double K) const;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n_points = 0;

  double predict(double x) const { return slope * x + intercept; }
};

double r_squared(const std::vector<double>& y, const std::vector<double>& fitted);

ScalingFit fit_exponential_saturation(const std::vector<double>& K, const std::vector<double>& G);
ScalingFit fit_exponential_saturation(const GapCurve& curve);

/// Ordinary least squares. Throws ConfigError on fewer than 2 points or constant x.
LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);
/// Least squares through the origin; intercept is 0.
LinearFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y);

/// Steps needed to close a fraction alpha of the asymptotic gap.
double k_alpha(double beta, double alpha);

struct BenefitThresholds {
  double variance = 0.002;
  double budget = 1.0;
};

struct BenefitDecision {
  bool low_variance = false;
  bool short_budget = false;
  bool adapt = true;

  std::string recommendation() const { return adapt ? "adapt" : "non-adaptive"; }
};

BenefitDecision negligible_benefit(double sigma2_tau, double beta, double K_budget,
                                   const BenefitThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Assumption checks

struct PLPoint {
  double gap = 0.0;
  double half_sq_grad = 0.0;
};

struct PLEstimate {
  double mu = 0.0;
  double r_squared = 0.0;
  std::vector<PLPoint> points;
  double threshold = 0.14;
  double l_star = 0.0;
  /// False when the run stopped on the step budget with a gradient above 1e-6.
  bool converged = false;
  double final_grad_norm = 0.0;
};

inline constexpr double kPlRegime = 0.14;

/// mu from a recorded trajectory: through-origin slope of 1/2 |g|^2 on
/// L - L* over points with 0 < L - L* < threshold. L* defaults to the last loss.
PLEstimate pl_from_trajectory(const std::vector<double>& losses, const std::vector<double>& grad_norms,
                              double threshold = kPlRegime, std::optional<double> l_star = std::nullopt);

PLEstimate verify_pl(const GateSpec& gate, const TaskParams& xi, const GrapeConfig& cfg, std::uint64_t seed,
                     double threshold = kPlRegime);

using TaskPair = std::pair<TaskParams, TaskParams>;

/// (base, base + s * direction) for every s.
std::vector<TaskPair> ray_pairs(const TaskParams& base, const std::vector<double>& direction,
                                const std::vector<double>& scales);
/// Independent draws from the distribution, paired consecutively.
std::vector<TaskPair> random_pairs(const TaskDistribution& dist, std::size_t n, std::uint64_t seed);

/// Frobenius distance between the drift superoperators of two tasks.
double generator_distance(const GateSpec& gate, const TaskParams& a, const TaskParams& b);

struct LipschitzResult {
  LinearFit fit;
  std::vector<double> task_distance;
  std::vector<double> generator_distance;
  /// max over pairs of d_gen / (slope * d_task).
  double max_bound_ratio = 0.0;
  bool bound_holds = false;
};

LipschitzResult verify_lipschitz(const GateSpec& gate, const std::vector<TaskPair>& pairs);

struct SeparationConfig {
  GrapeConfig grape;
  std::uint64_t seed = 0;
  /// A task counts as converged when its final gradient norm is below this.
  double grad_tol = 1e-2;
};

struct SeparationResult {
  LinearFit fit;
  std::vector<double> task_distance;
  std::vector<double> control_distance;
  std::vector<std::size_t> excluded;
};

SeparationResult verify_separation(const GateSpec& gate, const std::vector<TaskPair>& pairs,
                                   const SeparationConfig& cfg);

struct VarianceLevel {
  double sigma2_tau = 0.0;
  double sigma2_loss = 0.0;
  double mean_loss = 0.0;
  std::size_t n_tasks = 0;
  std::size_t non_converged = 0;
};

struct LossVarianceResult {
  LinearFit fit;
  std::vector<VarianceLevel> levels;
};

/// Per distribution: GRAPE optimal losses over n_tasks draws, warm-started
/// from the mean-task optimum; regress their variance on sigma^2_tau. Every
/// level reuses the same sample stream, so levels differ only by scaling.
LossVarianceResult loss_variance_regression(const GateSpec& gate, const std::vector<TaskDistribution>& levels,
                                            std::size_t n_tasks, const SeparationConfig& cfg);

struct VarianceConstant {
  double c_hat = 0.0;
  /// Same trace with H projected onto the PSD cone.
  double c_hat_psd = 0.0;
  RealMatrix hessian;
  RealMatrix optima_jacobian;
  double min_eigenvalue = 0.0;
  /// Hessian has an eigenvalue below -tol * max |eigenvalue|.
  bool not_psd = false;

  double predicted_asymptote(double sigma2_tau) const { return c_hat * sigma2_tau; }
};

/// c = tr(A^T H A) / (2 dim xi).
double variance_constant(const RealMatrix& H, const RealMatrix& A);

/// Central-difference Hessian of a gradient field, symmetrized. Step is
/// rel_step * max(1, |x_i|).
RealMatrix fd_hessian(const std::function<RealVector(const RealVector&)>& grad, const RealVector& x,
                      double rel_step = 1e-4);

using GradField = std::function<RealVector(const RealVector& theta, const RealVector& xi)>;
using Solver = std::function<RealVector(const RealVector& xi, const RealVector& warm_start)>;

/// H from fd_hessian at theta*, A from re-solving at xi +/- h e_j.
VarianceConstant estimate_variance_constant(const GradField& grad, const Solver& solve, const RealVector& xi,
                                            double rel_step = 1e-4, double psd_tol = 1e-6);

/// Schedule-space instance: GRAPE supplies theta* and the re-solves.
VarianceConstant estimate_variance_constant(const GateSpec& gate, const TaskParams& xi, const GrapeConfig& cfg,
                                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Output

nlohmann::json to_json(const ScalingFit& fit);
nlohmann::json to_json(const LinearFit& fit);

/// Writes <stem>.csv with columns (x, y, y_fit) and <stem>.json with the fit.
void write_fit(const std::filesystem::path& dir, const std::string& stem, const std::vector<double>& x,
               const std::vector<double>& y, const ScalingFit& fit);
void write_fit(const std::filesystem::path& dir, const std::string& stem, const std::vector<double>& x,
               const std::vector<double>& y, const LinearFit& fit);

}  // namespace qmeta
