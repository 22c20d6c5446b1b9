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

#include "qmeta/meta.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "qmeta/error.hpp"
#include "qmeta/io.hpp"
#include "qmeta/parallel.hpp"
#include "qmeta/random.hpp"

namespace qmeta {

void AdaptConfig::validate() const {
  if (K < 0) throw ConfigError("inner steps K must be >= 0");
  if (!(eta_in >= 0.0) || !std::isfinite(eta_in)) throw ConfigError("inner learning rate must be >= 0");
}

void MetaConfig::validate() const {
  if (iterations < 0) throw ConfigError("meta iterations must be >= 0");
  if (tasks_per_batch <= 0) throw ConfigError("tasks per batch must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("gradient clip norm must be > 0");
  if (eval_every <= 0) throw ConfigError("eval cadence must be positive");
  if (val_tasks <= 0) throw ConfigError("validation task count must be positive");
  if (!(divergence_factor > 1.0) || divergence_patience <= 0)
    throw ConfigError("divergence guard needs factor > 1 and positive patience");
  optimizer.validate();
}

void GrapeConfig::validate() const {
  if (steps < 0) throw ConfigError("GRAPE steps must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("GRAPE learning rate must be >= 0");
  if (grad_tol < 0.0) throw ConfigError("GRAPE gradient tolerance must be >= 0");
}

namespace {

PolicyScheduleMap policy_map(const PolicyArch& arch, const TaskParams& xi, const GateSpec& gate) {
  gate.check_task(xi);
  return PolicyScheduleMap(arch, task_features(xi, gate.kind), gate.horizon, gate.amp_max);
}

void check_arch(const PolicyArch& arch, const GateSpec& gate) {
  arch.validate();
  if (arch.feature_dim != feature_dim(gate.kind))
    throw ConfigError("policy feature_dim " + std::to_string(arch.feature_dim) + " does not match " +
                      to_string(gate.kind) + " features (" + std::to_string(feature_dim(gate.kind)) + ")");
  if (arch.n_controls != gate.n_controls())
    throw ConfigError("policy n_controls does not match the gate");
  if (arch.output_scale > gate.amp_max)
    throw ConfigError("policy output_scale exceeds the gate's amp_max");
}

}  // namespace

double policy_loss(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate) {
  return loss_at(gate.system, xi, policy_map(params.arch, xi, gate), params.theta, gate.loss, gate.sim);
}

GradResult policy_loss_and_grad(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate) {
  return loss_and_grad(gate.system, xi, policy_map(params.arch, xi, gate), params.theta, gate.loss, gate.sim);
}

AdaptResult gradient_descent(const std::function<GradResult(const RealVector&)>& f, const RealVector& theta0,
                             int K, double eta, bool final_grad) {
  AdaptResult out;
  out.theta = theta0;
  auto record = [&](double loss, int step) {
    if (!std::isfinite(loss))
      throw NumericError("non-finite loss at adaptation step " + std::to_string(step));
    out.trace.losses.push_back(loss);
    out.trace.fidelities.push_back(1.0 - loss);
  };
  for (int k = 0; k < K; ++k) {
    GradResult r = f(out.theta);
    record(r.loss, k);
    out.theta -= eta * r.grad;
  }
  GradResult last = f(out.theta);
  record(last.loss, K);
  if (final_grad) out.final_grad = std::move(last.grad);
  return out;
}

AdaptResult inner_adapt(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate,
                        const AdaptConfig& cfg, bool final_grad) {
  cfg.validate();
  params.validate();
  const PolicyScheduleMap map = policy_map(params.arch, xi, gate);
  auto f = [&](const RealVector& th) {
    return loss_and_grad(gate.system, xi, map, th, gate.loss, gate.sim);
  };
  if (!final_grad) {
    // The last evaluation needs only the loss.
    AdaptResult out;
    out.theta = params.theta;
    for (int k = 0; k < cfg.K; ++k) {
      GradResult r = f(out.theta);
      if (!std::isfinite(r.loss)) throw NumericError("non-finite loss at adaptation step " + std::to_string(k));
      out.trace.losses.push_back(r.loss);
      out.trace.fidelities.push_back(1.0 - r.loss);
      out.theta -= cfg.eta_in * r.grad;
    }
    const double last = loss_at(gate.system, xi, map, out.theta, gate.loss, gate.sim);
    if (!std::isfinite(last)) throw NumericError("non-finite loss at adaptation step " + std::to_string(cfg.K));
    out.trace.losses.push_back(last);
    out.trace.fidelities.push_back(1.0 - last);
    return out;
  }
  return gradient_descent(f, params.theta, cfg.K, cfg.eta_in, true);
}

double probe_stable_eta(const PolicyParams& params, const TaskParams& xi, const GateSpec& gate, int K,
                        double eta_max) {
  if (!(eta_max > 0.0)) throw ConfigError("eta_max must be > 0");
  double eta = eta_max;
  for (int j = 0; j < 20; ++j, eta *= 0.5) {
    const auto losses = inner_adapt(params, xi, gate, {K, eta}).trace.losses;
    bool monotone = true;
    for (std::size_t k = 1; k < losses.size(); ++k) monotone = monotone && losses[k] <= losses[k - 1];
    if (monotone) return eta;
  }
  return eta;
}

bool DivergenceGuard::update(double loss) {
  if (std::isnan(initial_)) initial_ = loss;
  count_ = loss > factor_ * initial_ ? count_ + 1 : 0;
  return count_ >= patience_;
}

// ---------------------------------------------------------------------------
// Meta-training

namespace {

std::string meta_value(const Checkpoint& c, const std::string& key) {
  auto it = c.metadata.find(key);
  if (it == c.metadata.end()) throw FormatError("checkpoint lacks training field '" + key + "'");
  return it->second;
}

struct Validation {
  double pre = 0.0;
  double post = 0.0;
};

Validation validate_policy(const PolicyParams& p, const GateSpec& gate, const std::vector<TaskParams>& tasks,
                           const AdaptConfig& adapt) {
  std::vector<double> pre(tasks.size()), post(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const AdaptResult r = inner_adapt(p, tasks[i], gate, adapt);
    pre[i] = r.trace.losses.front();
    post[i] = r.trace.losses.back();
  });
  Validation v;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    v.pre += pre[i];
    v.post += post[i];
  }
  v.pre /= static_cast<double>(tasks.size());
  v.post /= static_cast<double>(tasks.size());
  return v;
}

TrainResult train_loop(const GateSpec& gate, const TaskDistribution& dist, const MetaConfig& meta,
                       const AdaptConfig& adapt, const TrainOptions& opts, bool fixed_average) {
  meta.validate();
  adapt.validate();
  dist.validate();
  check_arch(opts.arch, gate);

  TrainResult result;
  result.params = init_params(meta.seed, opts.arch);
  Optimizer opt(meta.optimizer, result.params.theta.size());
  int start = 0;
  DivergenceGuard guard(meta.divergence_factor, meta.divergence_patience);

  if (opts.resume_from) {
    const Checkpoint c = load_checkpoint(*opts.resume_from);
    if (!(c.params.arch == opts.arch)) throw ConfigError("checkpoint architecture does not match the configuration");
    if (c.seed != meta.seed) throw ConfigError("checkpoint seed does not match the configuration");
    result.params.theta = c.params.theta;
    const auto m = c.sections.find("adam_m");
    const auto v = c.sections.find("adam_v");
    if (m == c.sections.end() || v == c.sections.end()) throw FormatError("checkpoint lacks optimizer state");
    opt.restore(m->second, v->second, std::stol(meta_value(c, "optimizer_steps")));
    start = std::stoi(meta_value(c, "next_iteration"));
    guard.restore(std::stod(meta_value(c, "initial_train_loss")), std::stoi(meta_value(c, "divergence_count")));
  }

  const auto val_tasks = sample_tasks(dist, static_cast<std::size_t>(meta.val_tasks),
                                      stream_seed(meta.seed, {kValidationStream}));
  const TaskParams mean_task = dist.mean();
  const AdaptConfig val_adapt = fixed_average ? AdaptConfig{0, 0.0} : adapt;

  std::optional<io::CsvAppender> log;
  if (opts.log_path) {
    if (!opts.resume_from && std::filesystem::exists(*opts.log_path)) std::filesystem::remove(*opts.log_path);
    log.emplace(*opts.log_path, kTrainLogHeader);
  }

  auto save = [&](int next_iteration) {
    if (!opts.checkpoint_path) return;
    Checkpoint c;
    c.params = result.params;
    c.seed = meta.seed;
    c.metadata = opts.metadata;
    c.metadata["next_iteration"] = std::to_string(next_iteration);
    c.metadata["optimizer_steps"] = std::to_string(opt.steps());
    c.metadata["initial_train_loss"] = io::format_double(guard.initial());
    c.metadata["divergence_count"] = std::to_string(guard.count());
    c.metadata["trainer"] = fixed_average ? "fixed-average" : "fomaml";
    c.sections["adam_m"] = opt.first_moment();
    c.sections["adam_v"] = opt.second_moment();
    save_checkpoint(*opts.checkpoint_path, c);
  };

  const std::size_t batch = fixed_average ? 1 : static_cast<std::size_t>(meta.tasks_per_batch);
  const Eigen::Index n = result.params.theta.size();
  std::vector<RealVector> grads(batch);
  std::vector<double> losses(batch);

  for (int t = start; t < meta.iterations; ++t) {
    if (opts.stop_at >= 0 && t >= opts.stop_at) {
      save(t);
      return result;
    }
    parallel_for(batch, [&](std::size_t i) {
      if (fixed_average) {
        GradResult r = policy_loss_and_grad(result.params, mean_task, gate);
        losses[i] = r.loss;
        grads[i] = std::move(r.grad);
        return;
      }
      const TaskParams xi = sample_task(dist, stream_seed(meta.seed, {kTrainStream, static_cast<std::uint64_t>(t), i}));
      AdaptResult r = inner_adapt(result.params, xi, gate, adapt, true);
      losses[i] = r.trace.losses.back();
      grads[i] = std::move(r.final_grad);
    });
    RealVector g = RealVector::Zero(n);
    double train_loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      g += grads[i];
      train_loss += losses[i];
    }
    g /= static_cast<double>(batch);
    train_loss /= static_cast<double>(batch);
    if (!std::isfinite(train_loss) || !g.allFinite())
      throw NumericError("non-finite training loss or gradient at meta-iteration " + std::to_string(t));

    TrainLogRow row;
    row.iter = t;
    row.train_loss = train_loss;
    row.grad_norm = clip_global_norm(g, meta.clip_norm);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.val_pre = row.val_post = row.gap = row.val_fidelity = nan;
    if (t % meta.eval_every == 0 || t == meta.iterations - 1) {
      const Validation v = validate_policy(result.params, gate, val_tasks, val_adapt);
      row.val_pre = v.pre;
      row.val_post = v.post;
      row.gap = v.pre - v.post;
      row.val_fidelity = 1.0 - v.post;
      row.validated = true;
    }
    const bool diverged = guard.update(train_loss);
    result.log.push_back(row);
    if (log)
      log->append({static_cast<double>(row.iter), row.train_loss, row.val_pre, row.val_post, row.gap,
                   row.grad_norm, row.val_fidelity});
    if (opts.on_row) opts.on_row(row);
    if (diverged) {
      result.diverged = true;
      result.iterations_done = t;
      save(t);
      return result;
    }

    const double lr = meta.schedule == LrSchedule::kCosine ? cosine_lr(meta.optimizer.lr, t, meta.iterations)
                                                           : meta.optimizer.lr;
    opt.step(result.params.theta, g, lr);
    result.iterations_done = t + 1;
    if (opts.checkpoint_every > 0 && (t + 1) % opts.checkpoint_every == 0) save(t + 1);
  }
  if (opts.checkpoint_path && meta.iterations > start) save(meta.iterations);
  if (result.iterations_done < start) result.iterations_done = start;
  return result;
}

}  // namespace

TrainResult fomaml_train(const GateSpec& gate, const TaskDistribution& train_dist, const MetaConfig& meta,
                         const AdaptConfig& adapt, const TrainOptions& opts) {
  return train_loop(gate, train_dist, meta, adapt, opts, false);
}

TrainResult train_fixed_average(const GateSpec& gate, const TaskDistribution& train_dist,
                                const MetaConfig& meta, const TrainOptions& opts) {
  return train_loop(gate, train_dist, meta, AdaptConfig{0, 0.0}, opts, true);
}

// ---------------------------------------------------------------------------
// GRAPE

ControlSchedule grape_initial_schedule(const GateSpec& gate, std::uint64_t seed) {
  return grape_initial_schedule(gate, seed, gate.grape_init_scale);
}

GrapeConfig default_grape_config(const GateSpec& gate, int steps) {
  GrapeConfig c;
  c.steps = steps;
  c.lr = gate.grape_lr;
  return c;
}

ControlSchedule grape_initial_schedule(const GateSpec& gate, std::uint64_t seed, double scale) {
  if (!(scale >= 0.0) || scale > gate.amp_max) throw ConfigError("GRAPE init scale must lie in [0, amp_max]");
  ControlSchedule s = gate.zero_schedule();
  Rng rng(stream_seed(seed, {0x6772617065ULL}));
  for (Eigen::Index i = 0; i < s.amplitudes.size(); ++i) s.amplitudes(i) = rng.uniform(-scale, scale);
  return s;
}

GrapeResult grape_optimize(const GateSpec& gate, const TaskParams& xi, const ControlSchedule& init,
                           const GrapeConfig& cfg) {
  cfg.validate();
  gate.check_task(xi);
  init.validate(gate.system.n_controls());
  const DirectScheduleMap map(init.horizon, init.n_segments(), init.n_controls(), init.amp_max);
  RealVector theta = DirectScheduleMap::flatten(init);
  Optimizer opt({cfg.optimizer, cfg.lr}, theta.size());
  GrapeResult out;
  for (int s = 0; s <= cfg.steps; ++s) {
    const GradResult r = loss_and_grad(gate.system, xi, map, theta, gate.loss, gate.sim);
    if (!std::isfinite(r.loss)) throw NumericError("non-finite GRAPE loss at step " + std::to_string(s));
    out.losses.push_back(r.loss);
    out.grad_norms.push_back(r.grad.norm());
    if (cfg.grad_tol > 0.0 && out.grad_norms.back() < cfg.grad_tol) {
      out.converged = true;
      break;
    }
    if (s == cfg.steps) break;
    opt.step(theta, r.grad);
    theta = theta.cwiseMax(-init.amp_max).cwiseMin(init.amp_max);
    out.steps_run = s + 1;
  }
  out.schedule = map.forward(theta);
  return out;
}

// ---------------------------------------------------------------------------
// Adaptation gap

GapCurve gap_from_traces(const std::vector<int>& K_list, std::vector<std::vector<double>> traces) {
  if (traces.empty()) throw ConfigError("adaptation gap needs at least one task");
  if (K_list.empty() || K_list.front() != 0) throw ConfigError("K list must start at 0");
  for (std::size_t j = 1; j < K_list.size(); ++j)
    if (K_list[j] <= K_list[j - 1]) throw ConfigError("K list must be strictly ascending");
  GapCurve c;
  c.K = K_list;
  c.mean_gap.assign(K_list.size(), 0.0);
  c.mean_fidelity.assign(K_list.size(), 0.0);
  for (const auto& tr : traces) {
    if (tr.size() < static_cast<std::size_t>(K_list.back()) + 1) throw ShapeError("trace shorter than max K");
    std::vector<double> row(K_list.size());
    for (std::size_t j = 0; j < K_list.size(); ++j) {
      row[j] = tr[0] - tr[static_cast<std::size_t>(K_list[j])];
      c.mean_gap[j] += row[j];
      c.mean_fidelity[j] += 1.0 - tr[static_cast<std::size_t>(K_list[j])];
    }
    c.per_task.push_back(std::move(row));
  }
  for (std::size_t j = 0; j < K_list.size(); ++j) {
    c.mean_gap[j] /= static_cast<double>(traces.size());
    c.mean_fidelity[j] /= static_cast<double>(traces.size());
  }
  c.traces = std::move(traces);
  return c;
}

GapCurve adaptation_gap(const PolicyParams& params, const GateSpec& gate, const std::vector<TaskParams>& tasks,
                        const std::vector<int>& K_list, const AdaptConfig& adapt) {
  if (tasks.empty()) throw ConfigError("adaptation gap needs a non-empty task sample");
  if (K_list.empty()) throw ConfigError("K list is empty");
  const AdaptConfig cfg{K_list.back(), adapt.eta_in};
  std::vector<std::vector<double>> traces(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) { traces[i] = inner_adapt(params, tasks[i], gate, cfg).trace.losses; });
  GapCurve c = gap_from_traces(K_list, std::move(traces));
  c.tasks = tasks;
  return c;
}

GapCurve adaptation_gap(const PolicyParams& params, const GateSpec& gate, const TaskDistribution& eval_dist,
                        const std::vector<int>& K_list, const AdaptConfig& adapt, std::size_t n_tasks,
                        std::uint64_t seed) {
  if (n_tasks == 0) throw ConfigError("adaptation gap needs n_tasks >= 1");
  return adaptation_gap(params, gate, sample_tasks(eval_dist, n_tasks, seed), K_list, adapt);
}

}  // namespace qmeta
