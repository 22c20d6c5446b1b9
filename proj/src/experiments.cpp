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

#include "qmeta/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <numeric>

#include "qmeta/analysis.hpp"
#include "qmeta/error.hpp"
#include "qmeta/io.hpp"
#include "qmeta/lqr.hpp"
#include "qmeta/parallel.hpp"
#include "qmeta/random.hpp"

namespace qmeta {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kGrapeStream = 4;
constexpr std::uint64_t kAssumptionStream = 5;

using json = nlohmann::json;

std::string k_range(int lo, int hi, int step) {
  std::string s;
  for (int k = lo; k <= hi; k += step) s += (s.empty() ? "" : ",") + std::to_string(k);
  return s;
}

std::string log_spaced(double lo, double hi, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) {
    const double v = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    s += (s.empty() ? "" : ",") + io::format_double(std::round(v * 1e6) / 1e6);
  }
  return s;
}

std::vector<std::string> x_gate_training() {
  return {"gate.kind=x-gate",     "policy.hidden_dim=128", "policy.hidden_layers=2", "policy.n_segments=60",
          "policy.output_scale=1", "meta.iterations=300",   "meta.batch=8",           "meta.optimizer=adam",
          "meta.lr=0.001",        "meta.weight_decay=0",   "meta.schedule=none",     "meta.clip=1",
          "adapt.K=5",            "adapt.eta=0.01"};
}

std::vector<std::string> cz_training(const std::string& kind) {
  return {"gate.kind=" + kind,       "policy.hidden_dim=256",  "policy.hidden_layers=4",   "policy.n_segments=30",
          "policy.output_scale=" + io::format_double(3.141592653589793), "meta.iterations=300", "meta.batch=4",
          "meta.optimizer=adamw",    "meta.lr=0.001",          "meta.weight_decay=0.0001", "meta.schedule=cosine",
          "meta.clip=1",             "adapt.K=3",              "adapt.eta=0.05"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<Preset> build_presets() {
  const std::vector<std::string> x_paper = {"meta.iterations=2000", "meta.batch=32", "eval.tasks=256"};
  const std::vector<std::string> cz_paper = {"meta.iterations=2000", "eval.tasks=256"};
  const std::string long_k = "eval.K_list=" + k_range(0, 400, 20);
  return {
      {"fig3a", "X-gate gap curve G_K and its exponential-saturation fit",
       concat(x_gate_training(), {"experiment=scaling", long_k, "eval.eta=1", "eval.tasks=64"}),
       concat(x_paper, {"eval.eta=0.01", "eval.K_list=" + k_range(0, 100, 5)})},
      {"fig3b", "X-gate asymptotic gap against task variance over diversity levels",
       concat(x_gate_training(), {"experiment=variance-sweep", long_k, "eval.eta=1", "eval.tasks=64",
                                  "eval.diversity=" + log_spaced(0.1, 1.25, 8)}),
       concat(x_paper, {"eval.eta=0.01", "eval.K_list=" + k_range(0, 100, 5)})},
      {"fig4", "FOMAML against the fixed-average initialization at mild OOD (1.1x)",
       concat(x_gate_training(),
              {"experiment=baselines", "eval.ood=1.1", "eval.K_list=" + k_range(0, 10, 1), "eval.eta=0.01"}),
       x_paper},
      {"fig5", "CZ gate under 10x noise: adaptation from the meta-initialization",
       concat(cz_training("cz"), {"experiment=ood", "eval.ood=10", "eval.K_list=" + k_range(0, 10, 1),
                                  "eval.eta=0.05", "eval.tasks=64", "meta.eval_every=50", "meta.val_tasks=8"}),
       cz_paper},
      {"fig2-assumptions", "PL, Lipschitz-dynamics and separation checks on the X gate",
       {"experiment=assumptions", "gate.kind=x-gate"},
       {"assumptions.pl_steps=1000", "assumptions.pairs=50"}},
      {"figA1-training", "X-gate meta-training diagnostics",
       concat(x_gate_training(), {"experiment=training", "meta.eval_every=25", "meta.val_tasks=32"}), x_paper},
      {"figA2-lqr", "Mass-spring-damper LQR scaling law", {"experiment=lqr"}, {"lqr.tasks=256", "lqr.K_max=200"}},
      {"figA3-variance", "Task variance against optimal-loss variance (GRAPE)",
       {"experiment=loss-variance", "gate.kind=x-gate"},
       {"loss_variance.tasks=100", "loss_variance.diversity=0.1,0.25,0.5,0.75,1,1.25"}},
      {"figA4-lr-sweep", "Inner learning-rate sweep: beta against eta",
       concat(x_gate_training(), {"experiment=lr-sweep", long_k, "eval.tasks=32"}),
       concat(x_paper, {"lr_sweep.etas=0.001,0.002,0.005,0.01,0.02,0.05,0.1", "lr_sweep.linear_max=0.02",
                        "eval.K_list=" + k_range(0, 100, 5)})},
      {"figA5-grape", "FOMAML against non-adaptive, per-task and from-scratch GRAPE",
       concat(x_gate_training(), {"experiment=grape", "eval.K_list=0,10", "eval.eta=0.01", "grape.tasks=16"}),
       concat(x_paper, {"grape.tasks=64"})},
      {"figA6-tunable", "Tunable-coupler CZ: adaptation per coupling strength",
       concat(cz_training("cz-tunable"), {"experiment=tunable", "eval.K_list=" + k_range(0, 10, 1),
                                          "eval.eta=0.05", "eval.tasks=16", "meta.eval_every=50",
                                          "meta.val_tasks=8"}),
       cz_paper},
  };
}

// ---------------------------------------------------------------------------
// Building blocks from a config

GateSpec gate_from(const Config& c) {
  GateOptions o;
  o.omega_q = c.get_double("gate.omega_q");
  o.coupling = c.get_double("gate.coupling");
  o.horizon = c.get_double("gate.horizon");
  o.dt = c.get_double("gate.dt");
  o.amp_max = c.get_double("gate.amp_max");
  o.n_segments = static_cast<int>(c.get_int("gate.n_segments"));
  return build_gate(parse_gate_kind(c.get_string("gate.kind")), o);
}

PolicyArch arch_from(const Config& c, const GateSpec& g) {
  PolicyArch a;
  a.feature_dim = feature_dim(g.kind);
  a.hidden_dim = static_cast<int>(c.get_int("policy.hidden_dim"));
  a.hidden_layers = static_cast<int>(c.get_int("policy.hidden_layers"));
  a.n_segments = static_cast<int>(c.get_int("policy.n_segments"));
  a.n_controls = g.n_controls();
  a.output_scale = c.get_double("policy.output_scale");
  a.validate();
  return a;
}

MetaConfig meta_from(const Config& c) {
  MetaConfig m;
  m.iterations = static_cast<int>(c.get_int("meta.iterations"));
  m.tasks_per_batch = static_cast<int>(c.get_int("meta.batch"));
  m.optimizer.kind = parse_optimizer_kind(c.get_string("meta.optimizer"));
  m.optimizer.lr = c.get_double("meta.lr");
  m.optimizer.weight_decay = c.get_double("meta.weight_decay");
  m.schedule = c.get_string("meta.schedule") == "cosine" ? LrSchedule::kCosine : LrSchedule::kNone;
  m.clip_norm = c.get_double("meta.clip");
  m.eval_every = static_cast<int>(c.get_int("meta.eval_every"));
  m.val_tasks = static_cast<int>(c.get_int("meta.val_tasks"));
  m.seed = c.get_uint("seed");
  m.divergence_factor = c.get_double("meta.divergence_factor");
  m.divergence_patience = static_cast<int>(c.get_int("meta.divergence_patience"));
  m.validate();
  return m;
}

AdaptConfig adapt_from(const Config& c) {
  AdaptConfig a{static_cast<int>(c.get_int("adapt.K")), c.get_double("adapt.eta")};
  a.validate();
  return a;
}

TaskDistribution train_dist_from(const Config& c, const GateSpec& g) {
  TaskDistribution d = default_distribution(g.kind);
  d.diversity = c.get_double("task.diversity");
  d.validate();
  return d;
}

TaskDistribution eval_dist(const Config& c, const GateSpec& g, double diversity) {
  TaskDistribution d = default_distribution(g.kind);
  d.diversity = diversity;
  d.ood = c.get_double("eval.ood");
  d.validate();
  return d;
}

GrapeConfig grape_from(const Config& c, const GateSpec& g, int steps) {
  GrapeConfig cfg = default_grape_config(g, steps);
  if (c.get_double("grape.lr") > 0.0) cfg.lr = c.get_double("grape.lr");
  cfg.optimizer = parse_optimizer_kind(c.get_string("grape.optimizer"));
  cfg.validate();
  return cfg;
}

std::size_t positive_count(const Config& c, const std::string& key) {
  const auto v = c.get_int(key);
  if (v <= 0) throw ConfigError("config key '" + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

double at_k(const GapCurve& c, const std::vector<double>& series, int K) {
  const auto it = std::find(c.K.begin(), c.K.end(), K);
  return it == c.K.end() ? series.back() : series[static_cast<std::size_t>(it - c.K.begin())];
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json fit_json(const ScalingFit& f) {
  json j = to_json(f);
  if (f.beta > 0.0) j["k95"] = k_alpha(f.beta, 0.95);
  return j;
}

// ---------------------------------------------------------------------------
// Artifact directory

class Artifacts {
 public:
  Artifacts(std::filesystem::path dir, bool plots) : dir_(std::move(dir)), plots_(plots) {}

  const std::filesystem::path& dir() const { return dir_; }

  void csv(const std::string& name, const io::CsvTable& t) {
    t.write(dir_ / name);
    add(name);
  }
  void text(const std::string& name, const std::string& body) {
    io::write_file(dir_ / name, body);
    add(name);
  }
  void svg(const std::string& name, const io::PlotSpec& spec) {
    if (!plots_) return;
    io::write_svg(dir_ / name, spec);
    add(name);
  }
  void fit(const std::string& stem, const std::vector<double>& x, const std::vector<double>& y,
           const ScalingFit& f) {
    write_fit(dir_, stem, x, y, f);
    add(stem + ".csv");
    add(stem + ".json");
  }
  void fit(const std::string& stem, const std::vector<double>& x, const std::vector<double>& y, const LinearFit& f) {
    write_fit(dir_, stem, x, y, f);
    add(stem + ".csv");
    add(stem + ".json");
  }
  void add(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  bool plots_;
  std::vector<std::string> files_;
};

struct Context {
  const Config& cfg;
  Artifacts& out;
  std::function<void(const std::string&)> log;
  json summary;

  void say(const std::string& s) const {
    if (log) log(s);
  }
  json& metrics() { return summary["metrics"]; }
};

io::PlotSeries series(std::string label, std::vector<double> x, std::vector<double> y, bool markers, bool line) {
  return {std::move(label), std::move(x), std::move(y), markers, line};
}

std::vector<double> as_double(const std::vector<int>& v) { return {v.begin(), v.end()}; }

std::vector<double> fitted(const ScalingFit& f, const std::vector<double>& x) {
  std::vector<double> y;
  for (double v : x) y.push_back(f.predict(v));
  return y;
}

std::vector<double> fitted(const LinearFit& f, const std::vector<double>& x) {
  std::vector<double> y;
  for (double v : x) y.push_back(f.predict(v));
  return y;
}

TrainResult train(Context& ctx, const GateSpec& gate, const TaskDistribution& dist, const std::string& name,
                  bool fixed_average) {
  TrainOptions o;
  o.arch = arch_from(ctx.cfg, gate);
  o.log_path = ctx.out.dir() / (name + "_log.csv");
  o.checkpoint_path = ctx.out.dir() / (name + ".ckpt");
  o.checkpoint_every = static_cast<int>(ctx.cfg.get_int("meta.checkpoint_every"));
  o.metadata["preset"] = ctx.cfg.get_string("preset");
  o.metadata["trainer"] = fixed_average ? "fixed-average" : "fomaml";
  o.metadata["config_hash"] = io::git_blob_sha1(ctx.cfg.snapshot());
  const int total = static_cast<int>(ctx.cfg.get_int("meta.iterations"));
  o.on_row = [&ctx, name, total](const TrainLogRow& r) {
    if (r.validated)
      ctx.say(name + " iter " + std::to_string(r.iter) + "/" + std::to_string(total) + " train " +
              io::format_double(r.train_loss) + " val_post " + io::format_double(r.val_post));
  };
  const MetaConfig meta = meta_from(ctx.cfg);
  TrainResult r = fixed_average ? train_fixed_average(gate, dist, meta, o)
                                : fomaml_train(gate, dist, meta, adapt_from(ctx.cfg), o);
  ctx.out.add(name + "_log.csv");
  ctx.out.add(name + ".ckpt");
  json t;
  t["iterations_done"] = r.iterations_done;
  t["diverged"] = r.diverged;
  if (!r.log.empty()) {
    t["initial_train_loss"] = num(r.log.front().train_loss);
    t["final_train_loss"] = num(r.log.back().train_loss);
    t["loss_drop"] = num(r.log.front().train_loss / r.log.back().train_loss);
    for (auto it = r.log.rbegin(); it != r.log.rend(); ++it)
      if (it->validated) {
        t["final_val_pre"] = num(it->val_pre);
        t["final_val_post"] = num(it->val_post);
        t["final_val_fidelity"] = num(it->val_fidelity);
        break;
      }
  }
  ctx.summary["training"][name] = t;
  return r;
}

GapCurve evaluate_gap(Context& ctx, const PolicyParams& p, const GateSpec& gate, const TaskDistribution& d,
                      double eta) {
  return adaptation_gap(p, gate, d, ctx.cfg.get_int_list("eval.K_list"), {0, eta},
                        positive_count(ctx.cfg, "eval.tasks"), stream_seed(ctx.cfg.get_uint("seed"), {kEvalStream}));
}

void write_curve(Context& ctx, const std::string& stem, const GapCurve& c) {
  io::CsvTable t;
  t.header = {"K", "mean_gap", "mean_fidelity"};
  for (std::size_t j = 0; j < c.K.size(); ++j) t.add_numbers({double(c.K[j]), c.mean_gap[j], c.mean_fidelity[j]});
  ctx.out.csv(stem + "_curve.csv", t);
  io::CsvTable per;
  per.header = {"task"};
  for (std::size_t i = 0; i < c.tasks.front().size(); ++i) per.header.push_back("xi" + std::to_string(i));
  for (int k : c.K) per.header.push_back("gap_K" + std::to_string(k));
  for (std::size_t i = 0; i < c.tasks.size(); ++i) {
    std::vector<double> row = {double(i)};
    row.insert(row.end(), c.tasks[i].values.begin(), c.tasks[i].values.end());
    row.insert(row.end(), c.per_task[i].begin(), c.per_task[i].end());
    per.add_numbers(row);
  }
  ctx.out.csv(stem + "_per_task.csv", per);
}

ScalingFit fit_and_plot(Context& ctx, const std::string& stem, const GapCurve& c, const std::string& title) {
  const ScalingFit f = fit_exponential_saturation(c);
  const std::vector<double> K = as_double(c.K);
  ctx.out.fit(stem + "_fit", K, c.mean_gap, f);
  io::PlotSpec p{title, "adaptation steps K", "gap G_K", false, false, {}};
  p.series.push_back(series("measured", K, c.mean_gap, true, false));
  p.series.push_back(series("c(1-exp(-beta K))", K, fitted(f, K), false, true));
  ctx.out.svg(stem + ".svg", p);
  return f;
}

// ---------------------------------------------------------------------------
// Runners

void run_scaling(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TrainResult tr = train(ctx, gate, train_dist_from(ctx.cfg, gate), "fomaml", false);
  const TaskDistribution d = eval_dist(ctx.cfg, gate, ctx.cfg.get_double_list("eval.diversity").at(0));
  ctx.say("evaluating gap curve");
  const GapCurve c = evaluate_gap(ctx, tr.params, gate, d, ctx.cfg.get_double("eval.eta"));
  write_curve(ctx, "gap", c);
  const ScalingFit f = fit_and_plot(ctx, "gap", c, "Adaptation gap");
  const double s2 = task_variance(d);
  const int k_report = static_cast<int>(ctx.cfg.get_int("eval.K_report"));
  const BenefitDecision b = negligible_benefit(s2, f.beta, ctx.cfg.get_double("eval.K_budget"),
                                               {ctx.cfg.get_double("eval.small_variance"), 1.0});
  ctx.summary["fit"] = fit_json(f);
  auto& m = ctx.metrics();
  m["gap_fit_r2"] = num(f.r_squared);
  m["gap_c"] = f.c;
  m["gap_beta"] = f.beta;
  m["sigma2_tau"] = s2;
  m["fidelity_pre"] = c.mean_fidelity.front();
  m["fidelity_post"] = at_k(c, c.mean_fidelity, k_report);
  m["single_task_loss"] = 1.0 - c.mean_fidelity.front();
  m["recommendation"] = b.recommendation();
}

void run_variance_sweep(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TrainResult tr = train(ctx, gate, train_dist_from(ctx.cfg, gate), "fomaml", false);
  const double eta = ctx.cfg.get_double("eval.eta");
  const double small = ctx.cfg.get_double("eval.small_variance");
  std::vector<double> s2, c_vals, g_last;
  io::CsvTable t;
  t.header = {"diversity", "sigma2_analytic", "sigma2_empirical", "c", "beta", "r_squared", "gap_last", "loss_pre"};
  io::PlotSpec curves{"Gap curves by diversity", "adaptation steps K", "gap G_K", false, false, {}};
  double near_zero = kNaN;
  int n_small = 0;
  for (double div : ctx.cfg.get_double_list("eval.diversity")) {
    const TaskDistribution d = eval_dist(ctx.cfg, gate, div);
    ctx.say("diversity " + io::format_double(div));
    const GapCurve c = evaluate_gap(ctx, tr.params, gate, d, eta);
    const ScalingFit f = fit_exponential_saturation(c);
    const double emp = task_variance(c.tasks);
    const double loss0 = 1.0 - c.mean_fidelity.front();
    t.add_numbers({div, task_variance(d), emp, f.c, f.beta, f.r_squared, c.mean_gap.back(), loss0});
    s2.push_back(emp);
    c_vals.push_back(f.c);
    g_last.push_back(c.mean_gap.back());
    curves.series.push_back(series("d=" + io::format_double(div), as_double(c.K), c.mean_gap, false, true));
    if (emp < small) {
      ++n_small;
      const double ratio = std::abs(f.c) / loss0;
      near_zero = std::isnan(near_zero) ? ratio : std::max(near_zero, ratio);
    }
  }
  ctx.out.csv("levels.csv", t);
  ctx.out.svg("gap_curves.svg", curves);
  const LinearFit lin = fit_linear(s2, c_vals);
  const LinearFit lin_last = fit_linear(s2, g_last);
  ctx.out.fit("asymptote_fit", s2, c_vals, lin);
  io::PlotSpec p{"Asymptotic gap against task variance", "sigma^2_tau", "A_inf", false, false, {}};
  p.series.push_back(series("fitted c", s2, c_vals, true, false));
  p.series.push_back(series("linear fit", s2, fitted(lin, s2), false, true));
  ctx.out.svg("asymptote.svg", p);
  ctx.summary["fit"] = to_json(lin);
  auto& m = ctx.metrics();
  m["asymptote_fit_r2"] = num(lin.r_squared);
  m["asymptote_slope"] = lin.slope;
  m["gap_last_fit_r2"] = num(lin_last.r_squared);
  m["near_zero_ratio"] = num(near_zero);
  m["small_variance_levels"] = n_small;
}

void run_ood(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TrainResult tr = train(ctx, gate, train_dist_from(ctx.cfg, gate), "fomaml", false);
  const TaskDistribution d = eval_dist(ctx.cfg, gate, ctx.cfg.get_double_list("eval.diversity").at(0));
  ctx.say("evaluating at ood factor " + io::format_double(d.ood));
  const GapCurve c = evaluate_gap(ctx, tr.params, gate, d, ctx.cfg.get_double("eval.eta"));
  write_curve(ctx, "gap", c);
  const ScalingFit f = fit_and_plot(ctx, "gap", c, "Adaptation gap under elevated noise");
  io::PlotSpec p{"Fidelity against adaptation steps", "K", "mean fidelity", false, false, {}};
  p.series.push_back(series("FOMAML", as_double(c.K), c.mean_fidelity, true, true));
  ctx.out.svg("fidelity.svg", p);
  const int k_report = static_cast<int>(ctx.cfg.get_int("eval.K_report"));
  ctx.summary["fit"] = fit_json(f);
  auto& m = ctx.metrics();
  m["fidelity_pre"] = c.mean_fidelity.front();
  m["fidelity_post"] = at_k(c, c.mean_fidelity, k_report);
  m["fidelity_gain_pp"] = 100.0 * (at_k(c, c.mean_fidelity, k_report) - c.mean_fidelity.front());
  m["gap_fit_r2"] = num(f.r_squared);
  m["gap_c"] = f.c;
  m["gap_beta"] = f.beta;
}

void run_baselines(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TaskDistribution train_d = train_dist_from(ctx.cfg, gate);
  const TrainResult fo = train(ctx, gate, train_d, "fomaml", false);
  const TrainResult fa = train(ctx, gate, train_d, "fixed_average", true);
  const TaskDistribution d = eval_dist(ctx.cfg, gate, ctx.cfg.get_double_list("eval.diversity").at(0));
  const double eta = ctx.cfg.get_double("eval.eta");
  const GapCurve a = evaluate_gap(ctx, fo.params, gate, d, eta);
  const GapCurve b = evaluate_gap(ctx, fa.params, gate, d, eta);
  io::CsvTable t;
  t.header = {"K", "fomaml_fidelity", "fixed_average_fidelity"};
  for (std::size_t j = 0; j < a.K.size(); ++j) t.add_numbers({double(a.K[j]), a.mean_fidelity[j], b.mean_fidelity[j]});
  ctx.out.csv("fidelity.csv", t);
  io::CsvTable per;
  per.header = {"task", "fomaml_pre", "fomaml_post", "fixed_pre", "fixed_post"};
  for (std::size_t i = 0; i < a.tasks.size(); ++i)
    per.add_numbers({double(i), 1 - a.traces[i].front(), 1 - a.traces[i].back(), 1 - b.traces[i].front(),
                     1 - b.traces[i].back()});
  ctx.out.csv("fidelity_per_task.csv", per);
  io::PlotSpec p{"Fidelity against adaptation steps (mild OOD)", "K", "mean fidelity", false, false, {}};
  p.series.push_back(series("FOMAML", as_double(a.K), a.mean_fidelity, true, true));
  p.series.push_back(series("fixed average", as_double(b.K), b.mean_fidelity, true, true));
  ctx.out.svg("fidelity.svg", p);
  const int k_report = static_cast<int>(ctx.cfg.get_int("eval.K_report"));
  auto& m = ctx.metrics();
  m["fomaml_pre"] = a.mean_fidelity.front();
  m["fomaml_post"] = at_k(a, a.mean_fidelity, k_report);
  m["fixed_pre"] = b.mean_fidelity.front();
  m["fixed_post"] = at_k(b, b.mean_fidelity, k_report);
  m["fomaml_minus_fixed_pre"] = a.mean_fidelity.front() - b.mean_fidelity.front();
}

void run_grape(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TrainResult fo = train(ctx, gate, train_dist_from(ctx.cfg, gate), "fomaml", false);
  const TaskDistribution d = eval_dist(ctx.cfg, gate, ctx.cfg.get_double_list("eval.diversity").at(0));
  const std::uint64_t seed = ctx.cfg.get_uint("seed");
  const auto tasks = sample_tasks(d, positive_count(ctx.cfg, "grape.tasks"), stream_seed(seed, {kEvalStream}));
  const int steps = static_cast<int>(ctx.cfg.get_int("grape.steps"));
  const int scratch_steps = static_cast<int>(ctx.cfg.get_int("grape.scratch_steps"));
  const ControlSchedule init = grape_initial_schedule(gate, stream_seed(seed, {kGrapeStream}));
  ctx.say("non-adaptive GRAPE on the mean task");
  const GrapeResult mean_run = grape_optimize(gate, d.mean(), init, grape_from(ctx.cfg, gate, steps));
  const std::size_t n = tasks.size();
  std::vector<double> nonadaptive(n), per_task(n), scratch(n);
  std::vector<std::vector<double>> scratch_curves(n);
  ctx.say("per-task GRAPE on " + std::to_string(n) + " tasks");
  parallel_for(n, [&](std::size_t i) {
    nonadaptive[i] = 1.0 - evaluate_loss(gate.system, tasks[i], mean_run.schedule, gate.loss, gate.sim);
    per_task[i] = 1.0 - grape_optimize(gate, tasks[i], mean_run.schedule, grape_from(ctx.cfg, gate, steps)).final_loss();
    const GrapeResult s = grape_optimize(gate, tasks[i], init, grape_from(ctx.cfg, gate, scratch_steps));
    scratch[i] = 1.0 - s.final_loss();
    scratch_curves[i] = s.losses;
  });
  const GapCurve fc = adaptation_gap(fo.params, gate, tasks, ctx.cfg.get_int_list("eval.K_list"),
                                     {0, ctx.cfg.get_double("eval.eta")});
  io::CsvTable t;
  t.header = {"task", "nonadaptive_grape", "per_task_grape", "scratch_grape", "fomaml_pre", "fomaml_post"};
  for (std::size_t i = 0; i < n; ++i)
    t.add_numbers({double(i), nonadaptive[i], per_task[i], scratch[i], 1 - fc.traces[i].front(),
                   1 - fc.traces[i].back()});
  ctx.out.csv("strategies.csv", t);
  std::vector<double> steps_axis, scratch_mean;
  io::CsvTable sc;
  sc.header = {"step", "mean_fidelity"};
  for (std::size_t s = 0; s < scratch_curves.front().size(); ++s) {
    double acc = 0.0;
    for (const auto& c : scratch_curves) acc += 1.0 - c[s];
    steps_axis.push_back(double(s));
    scratch_mean.push_back(acc / double(n));
    sc.add_numbers({steps_axis.back(), scratch_mean.back()});
  }
  ctx.out.csv("scratch_curve.csv", sc);
  io::PlotSpec p{"GRAPE from scratch", "GRAPE step", "mean fidelity", false, false, {}};
  p.series.push_back(series("GRAPE from scratch", steps_axis, scratch_mean, false, true));
  p.series.push_back(series("FOMAML K=0", {0.0, steps_axis.back()},
                            {fc.mean_fidelity.front(), fc.mean_fidelity.front()}, false, true));
  ctx.out.svg("scratch.svg", p);
  auto& m = ctx.metrics();
  m["nonadaptive_fidelity"] = mean_of(nonadaptive);
  m["per_task_fidelity"] = mean_of(per_task);
  m["scratch_fidelity"] = mean_of(scratch);
  m["fomaml_k0_fidelity"] = fc.mean_fidelity.front();
  m["fomaml_post_fidelity"] = fc.mean_fidelity.back();
  m["per_task_minus_nonadaptive"] = mean_of(per_task) - mean_of(nonadaptive);
}

void run_training(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TrainResult tr = train(ctx, gate, train_dist_from(ctx.cfg, gate), "fomaml", false);
  std::vector<double> it, loss, gn, vit, pre, post, gap, fid;
  for (const auto& r : tr.log) {
    it.push_back(r.iter);
    loss.push_back(r.train_loss);
    gn.push_back(r.grad_norm);
    if (r.validated) {
      vit.push_back(r.iter);
      pre.push_back(r.val_pre);
      post.push_back(r.val_post);
      gap.push_back(r.gap);
      fid.push_back(r.val_fidelity);
    }
  }
  io::PlotSpec a{"Training loss", "meta-iteration", "loss", false, true, {series("train", it, loss, false, true)}};
  io::PlotSpec b{"Validation loss", "meta-iteration", "loss", false, false,
                 {series("pre-adaptation", vit, pre, true, true), series("post-adaptation", vit, post, true, true),
                  series("gap", vit, gap, true, true)}};
  io::PlotSpec c{"Meta-gradient norm", "meta-iteration", "norm", false, true, {series("grad", it, gn, false, true)}};
  io::PlotSpec d{"Validation fidelity", "meta-iteration", "fidelity", false, false,
                 {series("post-adaptation", vit, fid, true, true)}};
  ctx.out.svg("train_loss.svg", a);
  ctx.out.svg("val_loss.svg", b);
  ctx.out.svg("grad_norm.svg", c);
  ctx.out.svg("val_fidelity.svg", d);
  const json& t = ctx.summary["training"]["fomaml"];
  auto& m = ctx.metrics();
  m["loss_drop"] = t.value("loss_drop", json(nullptr));
  m["final_val_fidelity"] = t.value("final_val_fidelity", json(nullptr));
  m["diverged"] = tr.diverged ? 1 : 0;
}

void run_assumptions(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TaskDistribution d = train_dist_from(ctx.cfg, gate);
  const std::uint64_t seed = stream_seed(ctx.cfg.get_uint("seed"), {kAssumptionStream});
  const TaskParams base = d.mean();
  const std::vector<double> dir(base.size(), 1.0 / std::sqrt(double(base.size())));
  const auto scales = ctx.cfg.get_double_list("assumptions.ray_scales");
  const std::size_t n_pairs = positive_count(ctx.cfg, "assumptions.pairs");

  ctx.say("PL trajectory");
  const PLEstimate pl = verify_pl(gate, base, grape_from(ctx.cfg, gate, int(ctx.cfg.get_int("assumptions.pl_steps"))),
                                  seed);
  io::CsvTable plt;
  plt.header = {"gap", "half_sq_grad", "mu_fit"};
  std::vector<double> px, py;
  for (const auto& p : pl.points) {
    plt.add_numbers({p.gap, p.half_sq_grad, pl.mu * p.gap});
    px.push_back(p.gap);
    py.push_back(p.half_sq_grad);
  }
  ctx.out.csv("pl.csv", plt);
  io::PlotSpec pp{"PL condition", "L - L*", "|grad L|^2 / 2", false, false, {series("trajectory", px, py, true, false)}};
  pp.series.push_back(series("mu (L - L*)", px, fitted(LinearFit{pl.mu, 0.0, 0.0, 0}, px), false, true));
  ctx.out.svg("pl.svg", pp);

  ctx.say("Lipschitz dynamics");
  const LipschitzResult lip = verify_lipschitz(gate, ray_pairs(base, dir, scales));
  const LipschitzResult lip_r = verify_lipschitz(gate, random_pairs(d, n_pairs, seed));
  ctx.out.fit("lipschitz_ray", lip.task_distance, lip.generator_distance, lip.fit);
  ctx.out.fit("lipschitz_random", lip_r.task_distance, lip_r.generator_distance, lip_r.fit);
  io::PlotSpec lp{"Generator distance", "|xi - xi'|", "|L_xi - L_xi'|_F", false, false, {}};
  lp.series.push_back(series("ray pairs", lip.task_distance, lip.generator_distance, true, false));
  lp.series.push_back(series("random pairs", lip_r.task_distance, lip_r.generator_distance, true, false));
  ctx.out.svg("lipschitz.svg", lp);

  ctx.say("separation of optimal controls");
  SeparationConfig sc{grape_from(ctx.cfg, gate, int(ctx.cfg.get_int("grape.steps"))), seed,
                      ctx.cfg.get_double("assumptions.grad_tol")};
  const SeparationResult sep = verify_separation(gate, ray_pairs(base, dir, scales), sc);
  const SeparationResult sep_r = verify_separation(gate, random_pairs(d, n_pairs, seed), sc);
  ctx.out.fit("separation_ray", sep.task_distance, sep.control_distance, sep.fit);
  ctx.out.fit("separation_random", sep_r.task_distance, sep_r.control_distance, sep_r.fit);
  io::PlotSpec sp{"Optimal-control distance", "|xi - xi'|", "|theta* - theta*'|", false, false, {}};
  sp.series.push_back(series("ray pairs", sep.task_distance, sep.control_distance, true, false));
  sp.series.push_back(series("random pairs", sep_r.task_distance, sep_r.control_distance, true, false));
  ctx.out.svg("separation.svg", sp);

  auto& m = ctx.metrics();
  m["pl_mu"] = pl.mu;
  m["pl_points"] = pl.points.size();
  m["pl_converged"] = pl.converged ? 1 : 0;
  m["pl_final_grad_norm"] = pl.final_grad_norm;
  m["lipschitz_ray_r2"] = num(lip.fit.r_squared);
  m["lipschitz_ray_slope"] = lip.fit.slope;
  m["lipschitz_random_r2"] = num(lip_r.fit.r_squared);
  m["lipschitz_random_max_ratio"] = lip_r.max_bound_ratio;
  m["separation_r2"] = num(sep.fit.r_squared);
  m["separation_slope"] = sep.fit.slope;
  m["separation_excluded"] = sep.excluded.size();
  m["separation_random_r2"] = num(sep_r.fit.r_squared);
  m["separation_random_excluded"] = sep_r.excluded.size();
}

void run_loss_variance(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  std::vector<TaskDistribution> levels;
  for (double div : ctx.cfg.get_double_list("loss_variance.diversity")) levels.push_back(eval_dist(ctx.cfg, gate, div));
  SeparationConfig sc{grape_from(ctx.cfg, gate, int(ctx.cfg.get_int("grape.steps"))),
                      stream_seed(ctx.cfg.get_uint("seed"), {kGrapeStream}), ctx.cfg.get_double("assumptions.grad_tol")};
  ctx.say("GRAPE optima over " + std::to_string(levels.size()) + " variance levels");
  const LossVarianceResult r =
      loss_variance_regression(gate, levels, positive_count(ctx.cfg, "loss_variance.tasks"), sc);
  std::vector<double> x, y;
  io::CsvTable t;
  t.header = {"sigma2_tau", "sigma2_loss", "mean_loss", "tasks", "non_converged"};
  std::size_t nc = 0;
  for (const auto& l : r.levels) {
    x.push_back(l.sigma2_tau);
    y.push_back(l.sigma2_loss);
    nc += l.non_converged;
    t.add_numbers({l.sigma2_tau, l.sigma2_loss, l.mean_loss, double(l.n_tasks), double(l.non_converged)});
  }
  ctx.out.csv("levels.csv", t);
  ctx.out.fit("loss_variance_fit", x, y, r.fit);
  io::PlotSpec p{"Optimal-loss variance against task variance", "sigma^2_tau", "sigma^2_L", false, false,
                 {series("levels", x, y, true, false), series("linear fit", x, fitted(r.fit, x), false, true)}};
  ctx.out.svg("loss_variance.svg", p);
  ctx.summary["fit"] = to_json(r.fit);
  auto& m = ctx.metrics();
  m["loss_variance_r2"] = num(r.fit.r_squared);
  m["loss_variance_slope"] = r.fit.slope;
  m["non_converged"] = nc;
}

void run_lr_sweep(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  const TrainResult tr = train(ctx, gate, train_dist_from(ctx.cfg, gate), "fomaml", false);
  const TaskDistribution d = eval_dist(ctx.cfg, gate, ctx.cfg.get_double_list("eval.diversity").at(0));
  const auto etas = ctx.cfg.get_double_list("lr_sweep.etas");
  if (etas.size() < 4) throw ConfigError("lr sweep needs at least 4 learning rates");
  const double linear_max = ctx.cfg.get_double("lr_sweep.linear_max");
  io::CsvTable t;
  t.header = {"eta", "c", "beta", "r_squared", "diverged"};
  io::PlotSpec curves{"Gap curves by inner learning rate", "K", "gap G_K", false, false, {}};
  std::vector<double> lin_eta, lin_beta, all_c, beta_of;
  int diverged = 0;
  for (double eta : etas) {
    ctx.say("eta " + io::format_double(eta));
    ScalingFit f;
    bool bad = false;
    try {
      const GapCurve c = evaluate_gap(ctx, tr.params, gate, d, eta);
      f = fit_exponential_saturation(c);
      curves.series.push_back(series("eta=" + io::format_double(eta), as_double(c.K), c.mean_gap, false, true));
    } catch (const NumericError&) {
      bad = true;
      ++diverged;
    }
    t.add_numbers({eta, bad ? kNaN : f.c, bad ? kNaN : f.beta, bad ? kNaN : f.r_squared, bad ? 1.0 : 0.0});
    if (bad) continue;
    if (!f.degenerate) all_c.push_back(f.c);
    beta_of.push_back(f.beta);
    if (eta <= linear_max) {
      lin_eta.push_back(eta);
      lin_beta.push_back(f.beta);
    }
  }
  ctx.out.csv("lr_sweep.csv", t);
  ctx.out.svg("gap_curves.svg", curves);
  auto& m = ctx.metrics();
  m["diverged_runs"] = diverged;
  if (lin_eta.size() >= 2) {
    const LinearFit lf = fit_linear(lin_eta, lin_beta);
    ctx.out.fit("beta_fit", lin_eta, lin_beta, lf);
    io::PlotSpec p{"Fitted beta against eta", "eta", "beta", false, false,
                   {series("linear regime", lin_eta, lin_beta, true, false),
                    series("fit", lin_eta, fitted(lf, lin_eta), false, true)}};
    ctx.out.svg("beta.svg", p);
    m["beta_eta_slope"] = lf.slope;
    m["beta_eta_r2"] = num(lf.r_squared);
    const double largest = etas.back();
    if (largest > linear_max && !beta_of.empty())
      m["beta_below_extrapolation"] = beta_of.back() < lf.predict(largest) ? 1 : 0;
  }
  if (!all_c.empty()) {
    const auto [lo, hi] = std::minmax_element(all_c.begin(), all_c.end());
    m["asymptote_spread"] = num((*hi - *lo) / mean_of(all_c));
  }
}

void run_tunable(Context& ctx) {
  const GateSpec gate = gate_from(ctx.cfg);
  if (gate.kind != GateKind::kCzTunable) throw ConfigError("tunable experiment needs gate.kind = cz-tunable");
  const TrainResult tr = train(ctx, gate, train_dist_from(ctx.cfg, gate), "fomaml", false);
  std::vector<TaskParams> tasks;
  for (double j : ctx.cfg.get_double_list("tunable.J")) tasks.push_back(TaskParams::coupling(j));
  const GapCurve c = adaptation_gap(tr.params, gate, tasks, ctx.cfg.get_int_list("eval.K_list"),
                                    {0, ctx.cfg.get_double("eval.eta")});
  io::CsvTable t;
  t.header = {"J", "fidelity_pre", "fidelity_post", "gap_last"};
  io::PlotSpec p{"Fidelity against adaptation steps", "K", "fidelity", false, false, {}};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    t.add_numbers({tasks[i][0], 1 - c.traces[i].front(), 1 - c.traces[i].back(), c.per_task[i].back()});
    std::vector<double> f;
    for (int k : c.K) f.push_back(1 - c.traces[i][std::size_t(k)]);
    p.series.push_back(series("J=" + io::format_double(tasks[i][0]), as_double(c.K), f, true, true));
  }
  ctx.out.csv("per_coupling.csv", t);
  ctx.out.svg("fidelity.svg", p);
  write_curve(ctx, "gap", c);
  const ScalingFit f = fit_and_plot(ctx, "gap", c, "Adaptation gap (tunable coupler)");
  ctx.summary["fit"] = fit_json(f);
  auto& m = ctx.metrics();
  m["fidelity_pre"] = c.mean_fidelity.front();
  m["fidelity_post"] = c.mean_fidelity.back();
  m["gap_fit_r2"] = num(f.r_squared);
}

void run_lqr(Context& ctx) {
  LqrGapConfig lc;
  lc.sigma_m = ctx.cfg.get_double_list("lqr.sigma_m");
  lc.K_max = static_cast<int>(ctx.cfg.get_int("lqr.K_max"));
  lc.eta = ctx.cfg.get_double("lqr.eta");
  lc.n_tasks = positive_count(ctx.cfg, "lqr.tasks");
  lc.seed = ctx.cfg.get_uint("seed");
  lc.K_report = static_cast<int>(ctx.cfg.get_int("lqr.K_report"));
  ctx.say("LQR gap experiment over " + std::to_string(lc.sigma_m.size()) + " mass spreads");
  const LqrGapResult r = lqr_gap_experiment(lc);
  std::vector<double> K(std::size_t(lc.K_max) + 1);
  std::iota(K.begin(), K.end(), 0.0);
  io::CsvTable curves, fits, surface;
  curves.header = {"K"};
  for (const auto& l : r.levels) curves.header.push_back("sigma_m=" + io::format_double(l.sigma_m));
  for (std::size_t k = 0; k < K.size(); ++k) {
    std::vector<double> row = {K[k]};
    for (const auto& l : r.levels) row.push_back(l.mean_gap[k]);
    curves.add_numbers(row);
  }
  fits.header = {"sigma_m", "sigma2", "c", "beta", "r_squared", "gap_K_report", "resampled"};
  surface.header = {"K", "sigma2", "gap"};
  io::PlotSpec pa{"LQR adaptation gap", "K", "gap G_K", false, false, {}};
  io::PlotSpec pb{"Residual A_inf - G_K", "K", "residual", false, true, {}};
  std::vector<double> s2, c, gk;
  double min_r2 = std::numeric_limits<double>::infinity();
  for (const auto& l : r.levels) {
    fits.add_numbers({l.sigma_m, l.sigma2, l.fit.c, l.fit.beta, l.fit.r_squared, l.mean_gap[std::size_t(lc.K_report)],
                      double(l.resampled)});
    for (std::size_t k = 0; k < K.size(); ++k) surface.add_numbers({K[k], l.sigma2, l.mean_gap[k]});
    s2.push_back(l.sigma2);
    c.push_back(l.fit.c);
    gk.push_back(l.mean_gap[std::size_t(lc.K_report)]);
    if (!l.fit.degenerate) min_r2 = std::min(min_r2, l.fit.r_squared);
    pa.series.push_back(series("sigma_m=" + io::format_double(l.sigma_m), K, l.mean_gap, false, true));
    std::vector<double> res;
    for (double g : l.mean_gap) res.push_back(std::max(l.fit.c - g, 1e-300));
    pb.series.push_back(series("sigma_m=" + io::format_double(l.sigma_m), K, res, false, true));
  }
  ctx.out.csv("gap_curves.csv", curves);
  ctx.out.csv("fits.csv", fits);
  ctx.out.csv("surface.csv", surface);
  ctx.out.svg("gap_curves.svg", pa);
  ctx.out.svg("residual.svg", pb);
  auto& m = ctx.metrics();
  m["min_exp_fit_r2"] = num(min_r2);
  if (s2.size() >= 2) {
    ctx.out.fit("asymptote_fit", s2, c, r.asymptote_fit);
    ctx.out.fit("finite_fit", s2, gk, r.finite_fit);
    io::PlotSpec pc{"Gap against mass variance", "sigma^2", "gap", false, false,
                    {series("A_inf", s2, c, true, false), series("A_inf fit", s2, fitted(r.asymptote_fit, s2), false, true),
                     series("G_K report", s2, gk, true, false),
                     series("G_K fit", s2, fitted(r.finite_fit, s2), false, true)}};
    ctx.out.svg("variance.svg", pc);
    m["asymptote_fit_r2"] = num(r.asymptote_fit.r_squared);
    m["finite_fit_r2"] = num(r.finite_fit.r_squared);
    ctx.summary["fit"] = to_json(r.asymptote_fit);
  }
  std::vector<double> betas;
  for (const auto& l : r.levels) betas.push_back(l.fit.beta);
  m["beta_mean"] = mean_of(betas);
  m["K_rob"] = std::vector<double>(r.K_rob.data(), r.K_rob.data() + r.K_rob.size());
}

using Runner = void (*)(Context&);

Runner runner_for(const std::string& experiment) {
  static const std::vector<std::pair<std::string, Runner>> table = {
      {"scaling", run_scaling},       {"variance-sweep", run_variance_sweep},
      {"ood", run_ood},               {"baselines", run_baselines},
      {"grape", run_grape},           {"training", run_training},
      {"assumptions", run_assumptions}, {"loss-variance", run_loss_variance},
      {"lr-sweep", run_lr_sweep},     {"tunable", run_tunable},
      {"lqr", run_lqr}};
  for (const auto& [name, fn] : table)
    if (name == experiment) return fn;
  throw ConfigError("unknown experiment '" + experiment + "'");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Everything the run reads must be valid before any file is written.
void validate_config(const Config& c) {
  runner_for(c.get_string("experiment"));
  if (c.get_string("experiment") != "lqr") {
    const GateSpec g = gate_from(c);
    if (c.get_string("experiment") != "assumptions" && c.get_string("experiment") != "loss-variance") {
      if (arch_from(c, g).output_scale > g.amp_max)
        throw ConfigError("policy.output_scale exceeds the gate amplitude limit");
      meta_from(c);
      adapt_from(c);
      train_dist_from(c, g);
      for (double d : c.get_double_list("eval.diversity")) eval_dist(c, g, d);
      const auto ks = c.get_int_list("eval.K_list");
      if (ks.empty() || ks.front() != 0) throw ConfigError("eval.K_list must start at 0");
      positive_count(c, "eval.tasks");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API

Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::kDesk;
  if (s == "paper") return Scale::kPaper;
  throw ConfigError("unknown scale '" + s + "' (expected desk or paper)");
}

std::string to_string(Scale s) { return s == Scale::kDesk ? "desk" : "paper"; }

const std::vector<Preset>& presets() {
  static const std::vector<Preset> p = build_presets();
  return p;
}

const Preset& find_preset(const std::string& name) {
  static const std::vector<std::pair<std::string, std::string>> aliases = {
      {"x-gate", "fig3a"}, {"cz", "fig5"}, {"cz-tunable", "figA6-tunable"}, {"lqr", "figA2-lqr"}};
  std::string target = name;
  for (const auto& [alias, real] : aliases)
    if (alias == name) target = real;
  for (const auto& p : presets())
    if (p.name == target) return p;
  throw ConfigError("unknown preset '" + name + "'");
}

Config preset_config(const std::string& name, Scale scale) {
  const Preset& p = find_preset(name);
  Config c;
  c.set("preset", p.name);
  c.set("scale", to_string(scale));
  for (const auto& a : p.desk) c.set_assignment(a);
  if (scale == Scale::kPaper)
    for (const auto& a : p.paper) c.set_assignment(a);
  return c;
}

const std::vector<CheckSpec>& check_table() {
  static const std::vector<CheckSpec> table = {
      {"C4.exp-fit", "figA2-lqr", "min_exp_fit_r2", ">=", 0.99, "LQR exponential saturation fit R^2"},
      {"C4.variance-fit", "figA2-lqr", "asymptote_fit_r2", ">=", 0.95, "LQR asymptote against variance R^2"},
      {"C5.gap-fit", "fig3a", "gap_fit_r2", ">=", 0.95, "X-gate G_K exponential fit R^2"},
      {"C5.variance-fit", "fig3b", "asymptote_fit_r2", ">=", 0.85, "X-gate asymptote against variance R^2"},
      {"C5.near-zero", "fig3b", "near_zero_ratio", "<", 0.10, "|G_inf| / single-task loss at small variance"},
      {"C6.gain", "fig5", "fidelity_gain_pp", ">=", 20.0, "CZ 10x OOD fidelity gain after K steps (points)"},
      {"C6.gap-fit", "fig5", "gap_fit_r2", ">=", 0.9, "CZ 10x OOD gap exponential fit R^2"},
      {"C7.lipschitz", "fig2-assumptions", "lipschitz_ray_r2", ">=", 1.0 - 1e-10, "rate-only Lipschitz linearity"},
      {"C7.separation-fit", "fig2-assumptions", "separation_r2", ">=", 0.9, "separation regression R^2"},
      {"C7.separation-slope", "fig2-assumptions", "separation_slope", ">", 0.0, "separation slope"},
      {"C7.pl", "fig2-assumptions", "pl_mu", ">", 0.0, "PL constant mu"},
      {"C9.fomaml-vs-fixed", "fig4", "fomaml_minus_fixed_pre", ">=", 0.03,
       "FOMAML minus fixed-average pre-adaptation fidelity at mild OOD"},
      {"C9.grape-order", "figA5-grape", "per_task_minus_nonadaptive", ">", 0.0,
       "per-task GRAPE minus non-adaptive GRAPE fidelity"},
      {"meta.val-fidelity", "figA1-training", "final_val_fidelity", ">", 0.9, "desk validation fidelity"},
      {"meta.loss-drop", "figA1-training", "loss_drop", ">=", 10.0, "desk training-loss reduction factor"},
      {"A3.loss-variance", "figA3-variance", "loss_variance_r2", ">=", 0.85, "loss variance against task variance R^2"},
      {"A4.slope", "figA4-lr-sweep", "beta_eta_slope", ">", 0.0, "beta against eta slope in the linear regime"},
      {"A4.asymptote-spread", "figA4-lr-sweep", "asymptote_spread", "<=", 0.2, "spread of A_inf across eta"},
  };
  return table;
}

std::vector<CheckResult> evaluate_checks(const std::string& preset, const nlohmann::json& summary) {
  std::vector<CheckResult> out;
  const std::string name = find_preset(preset).name;
  const json metrics = summary.contains("metrics") ? summary["metrics"] : json::object();
  for (const auto& spec : check_table()) {
    if (spec.preset != name) continue;
    CheckResult r{spec, kNaN, false};
    if (metrics.contains(spec.metric) && metrics[spec.metric].is_number()) {
      r.value = metrics[spec.metric].get<double>();
      if (spec.op == ">=") r.pass = r.value >= spec.threshold;
      else if (spec.op == ">") r.pass = r.value > spec.threshold;
      else if (spec.op == "<=") r.pass = r.value <= spec.threshold;
      else if (spec.op == "<") r.pass = r.value < spec.threshold;
    }
    out.push_back(r);
  }
  return out;
}

nlohmann::json to_json(const std::vector<CheckResult>& checks) {
  json arr = json::array();
  for (const auto& c : checks)
    arr.push_back({{"id", c.spec.id}, {"metric", c.spec.metric}, {"op", c.spec.op}, {"threshold", c.spec.threshold},
                   {"value", num(c.value)}, {"pass", c.pass}, {"description", c.spec.description}});
  return {{"table_version", kCheckTableVersion}, {"checks", arr}};
}

bool RunResult::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

RunResult run_experiment(const Config& cfg, const RunOptions& opts) {
  validate_config(cfg);
  if (opts.out_dir.empty()) throw ConfigError("output directory is required");
  std::filesystem::create_directories(opts.out_dir);
  Artifacts out(opts.out_dir, cfg.get_bool("output.plots"));
  const std::string snapshot = cfg.snapshot();

  json manifest;
  manifest["schema_version"] = kManifestVersion;
  manifest["tool"] = "qmeta";
  manifest["preset"] = cfg.get_string("preset");
  manifest["experiment"] = cfg.get_string("experiment");
  manifest["scale"] = cfg.get_string("scale");
  manifest["seed"] = cfg.get_uint("seed");
  manifest["config_hash"] = io::git_blob_sha1(snapshot);
  manifest["threads"] = thread_count();
  manifest["started_at"] = utc_now();
  manifest["status"] = "running";
  manifest["artifacts"] = json::array();
  io::write_file(opts.out_dir / "manifest.json", manifest.dump(2) + "\n");
  out.text("config.snapshot", snapshot);

  const auto t0 = std::chrono::steady_clock::now();
  Context ctx{cfg, out, opts.log, json::object()};
  ctx.summary["schema_version"] = kSummaryVersion;
  ctx.summary["preset"] = cfg.get_string("preset");
  ctx.summary["experiment"] = cfg.get_string("experiment");
  ctx.summary["metrics"] = json::object();
  try {
    runner_for(cfg.get_string("experiment"))(ctx);
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    manifest["finished_at"] = utc_now();
    io::write_file(opts.out_dir / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunResult result;
  result.dir = opts.out_dir;
  const std::string preset = cfg.get_string("preset");
  const bool known = std::any_of(presets().begin(), presets().end(), [&](const Preset& p) { return p.name == preset; });
  if (opts.check && known) {
    result.checks = evaluate_checks(preset, ctx.summary);
    ctx.summary["checks"] = to_json(result.checks);
  }
  ctx.summary["wall_seconds"] = wall;
  out.text("summary.json", ctx.summary.dump(2) + "\n");
  result.summary = ctx.summary;

  for (const auto& f : out.files()) {
    const std::string data = io::read_file(opts.out_dir / f);
    manifest["artifacts"].push_back({{"path", f}, {"bytes", data.size()}, {"sha256", io::sha256_hex(data)}});
  }
  manifest["status"] = "complete";
  manifest["finished_at"] = utc_now();
  manifest["wall_seconds"] = wall;
  if (opts.check) manifest["checks_passed"] = result.all_pass();
  io::write_file(opts.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

std::vector<CheckResult> check_directory(const std::filesystem::path& dir) {
  const json manifest = json::parse(io::read_file(dir / "manifest.json"));
  if (manifest.value("schema_version", 0) != kManifestVersion) throw FormatError("manifest schema version mismatch");
  if (manifest.value("status", "") != "complete") throw FormatError("run in " + dir.string() + " did not complete");
  const json summary = json::parse(io::read_file(dir / "summary.json"));
  if (summary.value("schema_version", 0) != kSummaryVersion) throw FormatError("summary schema version mismatch");
  return evaluate_checks(manifest.at("preset").get<std::string>(), summary);
}

}  // namespace qmeta
