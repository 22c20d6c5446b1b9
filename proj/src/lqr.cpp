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

#include "qmeta/lqr.hpp"

#include <cmath>
#include <limits>

#include "qmeta/error.hpp"
#include "qmeta/parallel.hpp"
#include "qmeta/random.hpp"

namespace qmeta {

namespace {

constexpr double kCareTol = 1e-9;

double spectral_abscissa(const RealMatrix& A) { return Eigen::EigenSolver<RealMatrix>(A, false).eigenvalues().real().maxCoeff(); }

/// Cost-to-go P_K: Acl^T P + P Acl + Q + K^T R K = 0.
RealMatrix cost_to_go(const LqrProblem& p, const RealMatrix& K) {
  const RealMatrix acl = p.A - p.B * K;
  return solve_lyapunov(acl.transpose(), p.Q + K.transpose() * p.R * K);
}

}  // namespace

void LqrProblem::validate() const {
  const Eigen::Index n = A.rows();
  if (n == 0 || A.cols() != n) throw ShapeError("A must be square and non-empty");
  if (B.rows() != n || B.cols() == 0) throw ShapeError("B must have as many rows as A");
  if (Q.rows() != n || Q.cols() != n) throw ShapeError("Q must match the state dimension");
  if (R.rows() != B.cols() || R.cols() != B.cols()) throw ShapeError("R must match the input dimension");
  if (!A.allFinite() || !B.allFinite() || !Q.allFinite() || !R.allFinite()) throw NumericError("non-finite LQR data");
  if ((Q - Q.transpose()).norm() > 1e-12 * std::max(1.0, Q.norm())) throw ConfigError("Q must be symmetric");
  if (Eigen::SelfAdjointEigenSolver<RealMatrix>(Q).eigenvalues().minCoeff() < -1e-12) throw ConfigError("Q must be PSD");
  if (Eigen::SelfAdjointEigenSolver<RealMatrix>(R).eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("R must be positive definite");
}

LqrProblem MassSpringDamper::problem() const {
  if (!(mass > 0.0)) throw ConfigError("mass must be positive");
  LqrProblem p;
  p.A = RealMatrix{{0.0, 1.0}, {-stiffness / mass, -damping / mass}};
  p.B = RealMatrix{{0.0}, {1.0 / mass}};
  p.Q = RealMatrix{{q_position, 0.0}, {0.0, q_velocity}};
  p.R = RealMatrix::Constant(1, 1, r);
  return p;
}

bool is_hurwitz(const RealMatrix& A) { return spectral_abscissa(A) < 0.0; }

RealMatrix solve_lyapunov(const RealMatrix& A, const RealMatrix& W) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || W.rows() != n || W.cols() != n) throw ShapeError("Lyapunov operands must be n x n");
  if (!is_hurwitz(A)) throw NumericError("Lyapunov equation needs a Hurwitz matrix");
  const RealMatrix I = RealMatrix::Identity(n, n);
  // vec(A X + X A^T) = (I (x) A + A (x) I) vec(X), column-major.
  RealMatrix L(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) L.block(i * n, j * n, n, n) = I(i, j) * A + A(i, j) * I;
  const RealVector rhs = -Eigen::Map<const RealVector>(RealMatrix(W).data(), n * n);
  RealVector x = L.fullPivLu().solve(rhs);
  RealMatrix X = Eigen::Map<RealMatrix>(x.data(), n, n);
  X = 0.5 * (X + X.transpose().eval());
  const double res = (A * X + X * A.transpose() + W).norm();
  if (!(res <= 1e-9 * std::max(1.0, W.norm()))) throw NumericError("Lyapunov residual " + std::to_string(res));
  return X;
}

RealMatrix stabilizing_gain(const LqrProblem& p) {
  p.validate();
  const Eigen::Index n = p.states();
  if (is_hurwitz(p.A)) return RealMatrix::Zero(p.inputs(), n);
  const double a = std::max(0.0, spectral_abscissa(p.A)) + 1.0;
  const RealMatrix shifted = -(p.A + a * RealMatrix::Identity(n, n));
  // -shifted is anti-Hurwitz, so solve with the Hurwitz matrix 'shifted'.
  const RealMatrix Z = solve_lyapunov(shifted, 2.0 * p.B * p.B.transpose());
  Eigen::FullPivLU<RealMatrix> lu(Z);
  if (lu.rank() < n || lu.rcond() < 1e-12) throw ConfigError("(A, B) is not controllable");
  const RealMatrix K = p.B.transpose() * lu.inverse();
  if (!is_hurwitz(p.A - p.B * K)) throw ConfigError("could not find a stabilizing gain");
  return K;
}

double care_residual(const LqrProblem& p, const RealMatrix& P) {
  const RealMatrix Rinv = p.R.inverse();
  return (p.A.transpose() * P + P * p.A - P * p.B * Rinv * p.B.transpose() * P + p.Q).norm();
}

CareSolution solve_care(const LqrProblem& p) {
  p.validate();
  CareSolution s;
  s.K = stabilizing_gain(p);
  const Eigen::LDLT<RealMatrix> r(p.R);
  for (s.iterations = 1; s.iterations <= 100; ++s.iterations) {
    s.P = cost_to_go(p, s.K);
    const RealMatrix next = r.solve(p.B.transpose() * s.P);
    const double change = (next - s.K).norm();
    s.K = next;
    if (change <= 1e-14 * std::max(1.0, s.K.norm())) break;
  }
  s.P = cost_to_go(p, s.K);
  s.residual = care_residual(p, s.P);
  if (!(s.residual <= kCareTol)) throw NumericError("Riccati residual " + std::to_string(s.residual));
  return s;
}

double lqr_cost(const LqrProblem& p, const RealMatrix& K) {
  if (K.rows() != p.inputs() || K.cols() != p.states()) throw ShapeError("gain must be inputs x states");
  const RealMatrix acl = p.A - p.B * K;
  if (!K.allFinite() || !is_hurwitz(acl)) return std::numeric_limits<double>::infinity();
  const RealMatrix X = solve_lyapunov(acl, RealMatrix::Identity(p.states(), p.states()));
  return (X * (p.Q + K.transpose() * p.R * K)).trace();
}

RealMatrix lqr_cost_grad(const LqrProblem& p, const RealMatrix& K) {
  if (K.rows() != p.inputs() || K.cols() != p.states()) throw ShapeError("gain must be inputs x states");
  const RealMatrix acl = p.A - p.B * K;
  if (!K.allFinite() || !is_hurwitz(acl)) throw NumericError("gain does not stabilize the system");
  const RealMatrix X = solve_lyapunov(acl, RealMatrix::Identity(p.states(), p.states()));
  const RealMatrix P = cost_to_go(p, K);
  return 2.0 * (p.R * K - p.B.transpose() * P) * X;
}

void LqrGapConfig::validate() const {
  if (sigma_m.empty()) throw ConfigError("sigma_m grid is empty");
  for (double s : sigma_m)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("sigma_m must be non-negative");
  if (K_max < 2) throw ConfigError("K_max must be at least 2");
  if (!(eta >= 0.0)) throw ConfigError("eta must be non-negative");
  if (n_tasks == 0) throw ConfigError("n_tasks must be positive");
  if (!(mass_mean > mass_floor) || !(mass_floor > 0.0)) throw ConfigError("need mass_mean > mass_floor > 0");
  if (K_report < 0 || K_report > K_max) throw ConfigError("K_report must lie in [0, K_max]");
}

std::vector<double> sample_masses(double mean, double sigma, double floor, std::size_t n, std::uint64_t seed,
                                  std::size_t* resampled) {
  std::vector<double> out(n);
  std::size_t redraws = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(stream_seed(seed, {i}));
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw NumericError("mass truncation rejects every draw");
      const double m = mean + sigma * rng.normal();
      if (m >= floor) {
        out[i] = m;
        break;
      }
      ++redraws;
    }
  }
  if (resampled) *resampled = redraws;
  return out;
}

std::vector<double> lqr_adapt(const LqrProblem& p, const RealMatrix& K0, int K_max, double eta) {
  RealMatrix K = K0;
  std::vector<double> costs;
  costs.reserve(static_cast<std::size_t>(K_max) + 1);
  costs.push_back(lqr_cost(p, K));
  for (int k = 1; k <= K_max; ++k) {
    K -= eta * lqr_cost_grad(p, K);
    costs.push_back(lqr_cost(p, K));
    if (!std::isfinite(costs.back())) throw NumericError("adapted gain lost stability at step " + std::to_string(k));
  }
  return costs;
}

LqrGapResult lqr_gap_experiment(const LqrGapConfig& cfg) {
  cfg.validate();
  LqrGapResult out;
  MassSpringDamper mean_sys;
  mean_sys.mass = cfg.mass_mean;
  out.K_rob = solve_care(mean_sys.problem()).K;
  std::vector<double> K_axis(static_cast<std::size_t>(cfg.K_max) + 1);
  for (std::size_t k = 0; k < K_axis.size(); ++k) K_axis[k] = static_cast<double>(k);

  std::vector<double> x, c, finite;
  for (std::size_t s = 0; s < cfg.sigma_m.size(); ++s) {
    LqrSigmaResult lvl;
    lvl.sigma_m = cfg.sigma_m[s];
    lvl.masses = sample_masses(cfg.mass_mean, lvl.sigma_m, cfg.mass_floor, cfg.n_tasks, cfg.seed, &lvl.resampled);
    double mean = 0.0;
    for (double m : lvl.masses) mean += m;
    mean /= static_cast<double>(lvl.masses.size());
    for (double m : lvl.masses) lvl.sigma2 += (m - mean) * (m - mean);
    lvl.sigma2 /= static_cast<double>(lvl.masses.size());

    std::vector<std::vector<double>> traces(lvl.masses.size());
    parallel_for(lvl.masses.size(), [&](std::size_t i) {
      MassSpringDamper sys;
      sys.mass = lvl.masses[i];
      traces[i] = lqr_adapt(sys.problem(), out.K_rob, cfg.K_max, cfg.eta);
    });
    lvl.mean_gap.assign(K_axis.size(), 0.0);
    for (const auto& tr : traces)
      for (std::size_t k = 0; k < tr.size(); ++k) lvl.mean_gap[k] += tr[0] - tr[k];
    for (double& g : lvl.mean_gap) g /= static_cast<double>(traces.size());
    lvl.fit = fit_exponential_saturation(K_axis, lvl.mean_gap);
    x.push_back(lvl.sigma2);
    c.push_back(lvl.fit.c);
    finite.push_back(lvl.mean_gap[static_cast<std::size_t>(cfg.K_report)]);
    out.levels.push_back(std::move(lvl));
  }
  if (x.size() >= 2) {
    out.asymptote_fit = fit_linear(x, c);
    out.finite_fit = fit_linear(x, finite);
  }
  return out;
}

}  // namespace qmeta
