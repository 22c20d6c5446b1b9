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

// Continuous-time LQR on a mass-spring-damper: Riccati solve for the mean
// mass, gradient adaptation of the gain per sampled mass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qmeta/analysis.hpp"

namespace qmeta {

/// dx/dt = A x + B u, cost integral of x'Qx + u'Ru.
struct LqrProblem {
  RealMatrix A;
  RealMatrix B;
  RealMatrix Q;
  RealMatrix R;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  void validate() const;
};

struct MassSpringDamper {
  double mass = 1.0;
  double damping = 0.5;
  double stiffness = 2.0;
  double q_position = 1.0;
  double q_velocity = 0.1;
  double r = 0.1;

  /// State (position, velocity): A = [[0, 1], [-k/m, -c/m]], B = [[0], [1/m]].
  LqrProblem problem() const;
};

struct CareSolution {
  RealMatrix P;
  /// u = -K x.
  RealMatrix K;
  double residual = 0.0;
  int iterations = 0;
};

bool is_hurwitz(const RealMatrix& A);

/// Solves A X + X A^T + W = 0 for Hurwitz A.
RealMatrix solve_lyapunov(const RealMatrix& A, const RealMatrix& W);

/// Stabilizing gain B^T Z^{-1} with (A + aI) Z + Z (A + aI)^T = 2 B B^T and
/// a above the spectral abscissa. Throws ConfigError if (A, B) is not controllable.
RealMatrix stabilizing_gain(const LqrProblem& p);

/// Newton-Kleinman from stabilizing_gain. Residual of the Riccati equation <= 1e-9.
CareSolution solve_care(const LqrProblem& p);

double care_residual(const LqrProblem& p, const RealMatrix& P);

/// tr(X (Q + K^T R K)) with (A - BK) X + X (A - BK)^T + I = 0: expected cost
/// over unit-covariance initial states. +inf when A - BK is not Hurwitz.
double lqr_cost(const LqrProblem& p, const RealMatrix& K);

/// 2 (R K - B^T P_K) X. Throws NumericError for a non-stabilizing gain.
RealMatrix lqr_cost_grad(const LqrProblem& p, const RealMatrix& K);

struct LqrGapConfig {
  std::vector<double> sigma_m = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  int K_max = 100;
  double eta = 0.01;
  std::size_t n_tasks = 64;
  std::uint64_t seed = 0;
  double mass_mean = 1.0;
  double mass_floor = 0.1;
  /// Finite-K column for the variance plot.
  int K_report = 10;

  void validate() const;
};

struct LqrSigmaResult {
  double sigma_m = 0.0;
  /// Empirical variance of the sampled masses.
  double sigma2 = 0.0;
  std::vector<double> masses;
  /// mean_gap[k] = mean over tasks of J(K_rob) - J(K_k), k = 0..K_max.
  std::vector<double> mean_gap;
  ScalingFit fit;
  std::size_t resampled = 0;
};

struct LqrGapResult {
  RealMatrix K_rob;
  std::vector<LqrSigmaResult> levels;
  /// Fitted asymptote c against sigma2.
  LinearFit asymptote_fit;
  /// Gap at K_report against sigma2.
  LinearFit finite_fit;
};

/// Mass draws from N(mean, sigma^2), redrawn below the floor.
std::vector<double> sample_masses(double mean, double sigma, double floor, std::size_t n, std::uint64_t seed,
                                  std::size_t* resampled = nullptr);

/// Gain trajectory of K_max gradient steps on the task cost; returns J at every step.
std::vector<double> lqr_adapt(const LqrProblem& p, const RealMatrix& K0, int K_max, double eta);

LqrGapResult lqr_gap_experiment(const LqrGapConfig& cfg);

}  // namespace qmeta
