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

#include "qmeta/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qmeta/error.hpp"
#include "qmeta/io.hpp"
#include "qmeta/parallel.hpp"
#include "qmeta/random.hpp"

namespace qmeta {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sse_of(const std::vector<double>& K, const std::vector<double>& G, double c, double beta) {
  double s = 0.0;
  for (std::size_t i = 0; i < K.size(); ++i) {
    const double r = G[i] - c * (1.0 - std::exp(-beta * K[i]));
    s += r * r;
  }
  return s;
}

/// Best c >= 0 for fixed beta.
double best_c(const std::vector<double>& K, const std::vector<double>& G, double beta) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < K.size(); ++i) {
    const double f = 1.0 - std::exp(-beta * K[i]);
    num += f * G[i];
    den += f * f;
  }
  return den > 0.0 ? std::max(0.0, num / den) : 0.0;
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

TaskParams with_values(const TaskParams& like, const RealVector& v) {
  return {like.kind, std::vector<double>(v.data(), v.data() + v.size())};
}

RealVector to_vector(const TaskParams& xi) {
  return Eigen::Map<const RealVector>(xi.values.data(), static_cast<Eigen::Index>(xi.size()));
}

}  // namespace

double ScalingFit::predict(double K) const { return c * (1.0 - std::exp(-beta * K)); }

double r_squared(const std::vector<double>& y, const std::vector<double>& fitted) {
  if (y.size() != fitted.size() || y.empty()) throw ShapeError("r_squared needs equal, non-empty inputs");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - fitted[i]) * (y[i] - fitted[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? kNaN : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

ScalingFit fit_exponential_saturation(const std::vector<double>& K, const std::vector<double>& G) {
  if (K.size() != G.size()) throw ShapeError("K and G lengths differ");
  if (K.size() < 3) throw ConfigError("exponential fit needs at least 3 points");
  check_finite(K, "K");
  check_finite(G, "G");
  for (std::size_t i = 1; i < K.size(); ++i)
    if (!(K[i] > K[i - 1])) throw ConfigError("K must be strictly ascending");
  if (K.front() < 0.0) throw ConfigError("K must be non-negative");

  ScalingFit fit;
  fit.n_points = K.size();
  if (std::all_of(G.begin(), G.end(), [](double g) { return g == 0.0; })) {
    fit.degenerate = true;
    fit.r_squared = kNaN;
    return fit;
  }

  double beta = 0.0, c = 0.0, best = std::numeric_limits<double>::infinity();
  constexpr int kGrid = 200;
  const double lo = std::log(1e-4), hi = std::log(2.0);
  for (int i = 0; i < kGrid; ++i) {
    const double b = std::exp(lo + (hi - lo) * i / (kGrid - 1));
    const double cb = best_c(K, G, b);
    const double s = sse_of(K, G, cb, b);
    if (s < best) {
      best = s;
      beta = b;
      c = cb;
    }
  }

  // Gauss-Newton with step halving.
  for (int it = 0; it < 200; ++it) {
    Eigen::Matrix2d JtJ = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Jtr = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < K.size(); ++i) {
      const double e = std::exp(-beta * K[i]);
      const Eigen::Vector2d j(1.0 - e, c * K[i] * e);
      const double r = G[i] - c * (1.0 - e);
      JtJ += j * j.transpose();
      Jtr += j * r;
    }
    const Eigen::Vector2d step = JtJ.ldlt().solve(Jtr);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      const double c2 = std::max(0.0, c + t * step(0));
      const double b2 = std::max(0.0, beta + t * step(1));
      const double s = sse_of(K, G, c2, b2);
      if (s < best) {
        const bool tiny = std::abs(c2 - c) <= 1e-15 * std::abs(c) && std::abs(b2 - beta) <= 1e-15 * beta;
        best = s;
        c = c2;
        beta = b2;
        improved = !tiny;
        break;
      }
    }
    if (!improved) break;
  }
  if (c == 0.0) beta = 0.0;
  fit.c = c;
  fit.beta = beta;
  std::vector<double> fitted(K.size());
  for (std::size_t i = 0; i < K.size(); ++i) fitted[i] = fit.predict(K[i]);
  fit.r_squared = r_squared(G, fitted);
  return fit;
}

ScalingFit fit_exponential_saturation(const GapCurve& curve) {
  return fit_exponential_saturation(std::vector<double>(curve.K.begin(), curve.K.end()), curve.mean_gap);
}

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("x and y lengths differ");
  if (x.size() < 2) throw ConfigError("linear fit needs at least 2 points");
  check_finite(x, "x");
  check_finite(y, "y");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("degenerate x: all values equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.n_points = x.size();
  std::vector<double> fitted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) fitted[i] = f.predict(x[i]);
  f.r_squared = r_squared(y, fitted);
  return f;
}

LinearFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("x and y lengths differ");
  if (x.empty()) throw ConfigError("fit needs at least 1 point");
  check_finite(x, "x");
  check_finite(y, "y");
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  if (!(sxx > 0.0)) throw ConfigError("degenerate x: all values zero");
  LinearFit f;
  f.slope = sxy / sxx;
  f.n_points = x.size();
  std::vector<double> fitted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) fitted[i] = f.predict(x[i]);
  f.r_squared = x.size() > 1 ? r_squared(y, fitted) : kNaN;
  return f;
}

double k_alpha(double beta, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
  return -std::log1p(-alpha) / beta;
}

BenefitDecision negligible_benefit(double sigma2_tau, double beta, double K_budget,
                                   const BenefitThresholds& thresholds) {
  BenefitDecision d;
  d.low_variance = sigma2_tau < thresholds.variance;
  d.short_budget = beta * K_budget < thresholds.budget;
  d.adapt = !(d.low_variance || d.short_budget);
  return d;
}

// ---------------------------------------------------------------------------
// PL

PLEstimate pl_from_trajectory(const std::vector<double>& losses, const std::vector<double>& grad_norms,
                              double threshold, std::optional<double> l_star) {
  if (losses.size() != grad_norms.size()) throw ShapeError("losses and gradient norms differ in length");
  if (losses.empty()) throw ConfigError("empty trajectory");
  check_finite(losses, "losses");
  check_finite(grad_norms, "gradient norms");
  PLEstimate e;
  e.threshold = threshold;
  e.l_star = l_star.value_or(losses.back());
  e.final_grad_norm = grad_norms.back();
  e.converged = e.final_grad_norm < 1e-6;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double gap = losses[i] - e.l_star;
    if (gap > 0.0 && gap < threshold) {
      e.points.push_back({gap, 0.5 * grad_norms[i] * grad_norms[i]});
      x.push_back(gap);
      y.push_back(e.points.back().half_sq_grad);
    }
  }
  if (e.points.size() < 5)
    throw NumericError("PL estimate needs at least 5 points in the regime, got " + std::to_string(e.points.size()));
  const LinearFit f = fit_through_origin(x, y);
  e.mu = f.slope;
  e.r_squared = f.r_squared;
  return e;
}

PLEstimate verify_pl(const GateSpec& gate, const TaskParams& xi, const GrapeConfig& cfg, std::uint64_t seed,
                     double threshold) {
  const GrapeResult r = grape_optimize(gate, xi, grape_initial_schedule(gate, seed), cfg);
  return pl_from_trajectory(r.losses, r.grad_norms, threshold);
}

// ---------------------------------------------------------------------------
// Lipschitz and separation

std::vector<TaskPair> ray_pairs(const TaskParams& base, const std::vector<double>& direction,
                                const std::vector<double>& scales) {
  if (direction.size() != base.size()) throw ShapeError("direction and task dimension differ");
  std::vector<TaskPair> out;
  for (double s : scales) {
    TaskParams b = base;
    for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] += s * direction[i];
    out.emplace_back(base, std::move(b));
  }
  return out;
}

std::vector<TaskPair> random_pairs(const TaskDistribution& dist, std::size_t n, std::uint64_t seed) {
  const auto tasks = sample_tasks(dist, 2 * n, seed);
  std::vector<TaskPair> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(tasks[2 * i], tasks[2 * i + 1]);
  return out;
}

double generator_distance(const GateSpec& gate, const TaskParams& a, const TaskParams& b) {
  gate.check_task(a);
  gate.check_task(b);
  return (superoperator_matrix(gate.system, a) - superoperator_matrix(gate.system, b)).norm();
}

LipschitzResult verify_lipschitz(const GateSpec& gate, const std::vector<TaskPair>& pairs) {
  if (pairs.size() < 10) throw ConfigError("Lipschitz check needs at least 10 pairs");
  LipschitzResult r;
  for (const auto& [a, b] : pairs) {
    r.task_distance.push_back(task_distance(a, b));
    r.generator_distance.push_back(generator_distance(gate, a, b));
  }
  r.fit = fit_linear(r.task_distance, r.generator_distance);
  r.bound_holds = r.fit.slope > 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (r.task_distance[i] == 0.0) {
      r.bound_holds = r.bound_holds && r.generator_distance[i] == 0.0;
      continue;
    }
    const double ratio = r.generator_distance[i] / (r.fit.slope * r.task_distance[i]);
    r.max_bound_ratio = std::max(r.max_bound_ratio, ratio);
  }
  r.bound_holds = r.bound_holds && r.max_bound_ratio <= 1.05;
  return r;
}

SeparationResult verify_separation(const GateSpec& gate, const std::vector<TaskPair>& pairs,
                                   const SeparationConfig& cfg) {
  if (pairs.size() < 2) throw ConfigError("separation check needs at least 2 pairs");
  const ControlSchedule init = grape_initial_schedule(gate, cfg.seed);
  std::vector<GrapeResult> first(pairs.size()), second(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    first[i] = grape_optimize(gate, pairs[i].first, init, cfg.grape);
    second[i] = grape_optimize(gate, pairs[i].second, init, cfg.grape);
  });
  SeparationResult r;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (first[i].grad_norms.back() >= cfg.grad_tol || second[i].grad_norms.back() >= cfg.grad_tol) {
      r.excluded.push_back(i);
      continue;
    }
    r.task_distance.push_back(task_distance(pairs[i].first, pairs[i].second));
    r.control_distance.push_back((first[i].schedule.amplitudes - second[i].schedule.amplitudes).norm());
  }
  if (r.task_distance.size() < 2) throw NumericError("too few converged GRAPE pairs for the separation fit");
  r.fit = fit_linear(r.task_distance, r.control_distance);
  return r;
}

LossVarianceResult loss_variance_regression(const GateSpec& gate, const std::vector<TaskDistribution>& levels,
                                            std::size_t n_tasks, const SeparationConfig& cfg) {
  if (levels.size() < 4) throw ConfigError("loss-variance regression needs at least 4 levels");
  if (n_tasks < 2) throw ConfigError("loss-variance regression needs at least 2 tasks per level");
  LossVarianceResult out;
  std::vector<double> x, y;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const TaskDistribution& d = levels[l];
    const GrapeResult ref = grape_optimize(gate, d.mean(), grape_initial_schedule(gate, cfg.seed), cfg.grape);
    const auto tasks = sample_tasks(d, n_tasks, cfg.seed);
    std::vector<GrapeResult> runs(tasks.size());
    parallel_for(tasks.size(), [&](std::size_t i) { runs[i] = grape_optimize(gate, tasks[i], ref.schedule, cfg.grape); });
    VarianceLevel v;
    v.sigma2_tau = task_variance(d);
    v.n_tasks = tasks.size();
    for (const auto& r : runs) {
      v.mean_loss += r.final_loss();
      if (r.grad_norms.back() >= cfg.grad_tol) ++v.non_converged;
    }
    v.mean_loss /= static_cast<double>(runs.size());
    for (const auto& r : runs) v.sigma2_loss += (r.final_loss() - v.mean_loss) * (r.final_loss() - v.mean_loss);
    v.sigma2_loss /= static_cast<double>(runs.size() - 1);
    x.push_back(v.sigma2_tau);
    y.push_back(v.sigma2_loss);
    out.levels.push_back(v);
  }
  out.fit = fit_linear(x, y);
  return out;
}

// ---------------------------------------------------------------------------
// Variance constant

double variance_constant(const RealMatrix& H, const RealMatrix& A) {
  if (H.rows() != H.cols() || A.rows() != H.rows() || A.cols() == 0) throw ShapeError("H must be n x n and A n x m");
  return (A.transpose() * H * A).trace() / (2.0 * static_cast<double>(A.cols()));
}

RealMatrix fd_hessian(const std::function<RealVector(const RealVector&)>& grad, const RealVector& x,
                      double rel_step) {
  if (!(rel_step > 0.0)) throw ConfigError("Hessian step must be positive");
  const Eigen::Index n = x.size();
  RealMatrix H(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x(j)));
    RealVector xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const RealVector gp = grad(xp), gm = grad(xm);
    if (gp.size() != n || gm.size() != n) throw ShapeError("gradient length differs from x");
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

VarianceConstant estimate_variance_constant(const GradField& grad, const Solver& solve, const RealVector& xi,
                                            double rel_step, double psd_tol) {
  const RealVector theta = solve(xi, RealVector());
  VarianceConstant out;
  out.hessian = fd_hessian([&](const RealVector& t) { return grad(t, xi); }, theta, rel_step);
  out.optima_jacobian.resize(theta.size(), xi.size());
  for (Eigen::Index j = 0; j < xi.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(xi(j)));
    RealVector xp = xi, xm = xi;
    xp(j) += h;
    xm(j) -= h;
    out.optima_jacobian.col(j) = (solve(xp, theta) - solve(xm, theta)) / (2.0 * h);
  }
  const Eigen::SelfAdjointEigenSolver<RealMatrix> eig(out.hessian);
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  const double scale = eig.eigenvalues().cwiseAbs().maxCoeff();
  out.not_psd = out.min_eigenvalue < -psd_tol * std::max(scale, 1e-300);
  out.c_hat = variance_constant(out.hessian, out.optima_jacobian);
  const RealMatrix h_psd =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
  out.c_hat_psd = variance_constant(h_psd, out.optima_jacobian);
  return out;
}

VarianceConstant estimate_variance_constant(const GateSpec& gate, const TaskParams& xi, const GrapeConfig& cfg,
                                            std::uint64_t seed) {
  gate.check_task(xi);
  const ControlSchedule init = grape_initial_schedule(gate, seed);
  const DirectScheduleMap map(init.horizon, init.n_segments(), init.n_controls(), init.amp_max);
  GradField grad = [&](const RealVector& theta, const RealVector& x) {
    return loss_and_grad(gate.system, with_values(xi, x), map, theta, gate.loss, gate.sim).grad;
  };
  Solver solve = [&](const RealVector& x, const RealVector& warm) {
    const ControlSchedule start = warm.size() == 0 ? init : map.forward(warm);
    return DirectScheduleMap::flatten(grape_optimize(gate, with_values(xi, x), start, cfg).schedule);
  };
  return estimate_variance_constant(grad, solve, to_vector(xi));
}

// ---------------------------------------------------------------------------
// Output

nlohmann::json to_json(const ScalingFit& fit) {
  nlohmann::json j;
  j["model"] = "exponential_saturation";
  j["c"] = fit.c;
  j["beta"] = fit.beta;
  j["r_squared"] = std::isfinite(fit.r_squared) ? nlohmann::json(fit.r_squared) : nlohmann::json(nullptr);
  j["n_points"] = fit.n_points;
  j["degenerate"] = fit.degenerate;
  return j;
}

nlohmann::json to_json(const LinearFit& fit) {
  nlohmann::json j;
  j["model"] = "linear";
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r_squared"] = std::isfinite(fit.r_squared) ? nlohmann::json(fit.r_squared) : nlohmann::json(nullptr);
  j["n_points"] = fit.n_points;
  return j;
}

namespace {

template <class Fit>
void write_fit_impl(const std::filesystem::path& dir, const std::string& stem, const std::vector<double>& x,
                    const std::vector<double>& y, const Fit& fit) {
  if (x.size() != y.size()) throw ShapeError("x and y lengths differ");
  io::CsvTable t;
  t.header = {"x", "y", "y_fit"};
  for (std::size_t i = 0; i < x.size(); ++i) t.add_numbers({x[i], y[i], fit.predict(x[i])});
  t.write(dir / (stem + ".csv"));
  nlohmann::json j = to_json(fit);
  j["schema_version"] = 1;
  io::write_file(dir / (stem + ".json"), j.dump(2) + "\n");
}

}  // namespace

void write_fit(const std::filesystem::path& dir, const std::string& stem, const std::vector<double>& x,
               const std::vector<double>& y, const ScalingFit& fit) {
  write_fit_impl(dir, stem, x, y, fit);
}

void write_fit(const std::filesystem::path& dir, const std::string& stem, const std::vector<double>& x,
               const std::vector<double>& y, const LinearFit& fit) {
  write_fit_impl(dir, stem, x, y, fit);
}

}  // namespace qmeta
