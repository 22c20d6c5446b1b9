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

// qmeta command-line front end.

#include <CLI11.hpp>
#include <cmath>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "qmeta/analysis.hpp"
#include "qmeta/config.hpp"
#include "qmeta/error.hpp"
#include "qmeta/experiments.hpp"
#include "qmeta/io.hpp"
#include "qmeta/parallel.hpp"
#include "qmeta/random.hpp"

namespace {

using qmeta::Config;
using nlohmann::json;

constexpr int kExitChecksFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scale;
  std::string out;
  std::string config_file;
  std::vector<std::string> sets;
  bool check = false;
  bool deterministic = false;
  int threads = 0;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool with_check) {
  app->add_option("--seed", c.seed, "master seed")->envname("QMETA_SEED");
  app->add_option("--scale", c.scale, "desk or paper")->envname("QMETA_SCALE");
  app->add_option("--out", c.out, "artifact directory")->envname("QMETA_OUT");
  app->add_option("--config", c.config_file, "config file (key = value text or JSON)")->envname("QMETA_CONFIG");
  app->add_option("--set", c.sets, "override one key, key=value (repeatable)");
  app->add_option("--threads", c.threads, "worker threads (default: all cores)")->envname("QMETA_THREADS");
  app->add_flag("--deterministic", c.deterministic, "single-threaded bit-exact mode");
  app->add_flag("--quiet", c.quiet, "no progress output");
  if (with_check) app->add_flag("--check", c.check, "evaluate acceptance thresholds; exit 1 on failure");
}

Config build_config(const std::string& preset, const Common& c) {
  Config cfg = qmeta::preset_config(preset, qmeta::parse_scale(c.scale.value_or("desk")));
  if (!c.config_file.empty()) {
    const std::string text = qmeta::io::read_file(c.config_file);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') cfg.merge_json(json::parse(text));
    else cfg.merge_text(text);
  }
  for (const auto& s : c.sets) cfg.set_assignment(s);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (c.scale) cfg.set("scale", *c.scale);
  return cfg;
}

void apply_threads(const Common& c) {
  if (c.deterministic) qmeta::set_thread_count(1);
  else if (c.threads > 0) qmeta::set_thread_count(c.threads);
}

std::string default_out(const Config& cfg) {
  return "runs/" + cfg.get_string("preset") + "-" + cfg.get_string("scale") + "-s" +
         std::to_string(cfg.get_uint("seed"));
}

void print_checks(const std::vector<qmeta::CheckResult>& checks) {
  for (const auto& r : checks)
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.spec.id << ": " << r.spec.metric << " = "
              << qmeta::io::format_double(r.value) << " (need " << r.spec.op << " "
              << qmeta::io::format_double(r.spec.threshold) << ")\n";
}

int do_run(const std::string& preset, const Common& c) {
  const Config cfg = build_config(preset, c);
  apply_threads(c);
  qmeta::RunOptions o;
  o.out_dir = c.out.empty() ? default_out(cfg) : c.out;
  o.check = c.check;
  if (!c.quiet) o.log = [](const std::string& s) { std::cerr << "[qmeta] " << s << "\n"; };
  const qmeta::RunResult r = qmeta::run_experiment(cfg, o);
  std::cout << "artifacts: " << r.dir.string() << "\n";
  std::cout << r.summary["metrics"].dump(2) << "\n";
  if (!c.check) return 0;
  print_checks(r.checks);
  return r.all_pass() ? 0 : kExitChecksFailed;
}

int do_fit(const std::string& path, const std::string& model, const std::string& xcol, const std::string& ycol) {
  auto rows = qmeta::io::parse_csv(qmeta::io::read_file(path));
  if (rows.size() < 2) throw qmeta::FormatError(path + " needs a header row and data");
  qmeta::io::CsvTable t;
  t.header = rows.front();
  t.rows.assign(rows.begin() + 1, rows.end());
  auto column = [&](const std::string& name, std::size_t fallback) {
    std::size_t idx = fallback;
    if (!name.empty()) {
      const auto it = std::find(t.header.begin(), t.header.end(), name);
      if (it == t.header.end()) throw qmeta::ConfigError("column '" + name + "' not in " + path);
      idx = static_cast<std::size_t>(it - t.header.begin());
    }
    std::vector<double> v;
    for (const auto& row : t.rows) {
      if (idx >= row.size()) throw qmeta::FormatError("short row in " + path);
      v.push_back(std::stod(row[idx]));
    }
    return v;
  };
  const auto x = column(xcol, 0);
  const auto y = column(ycol, 1);
  json j;
  if (model == "exp") {
    const qmeta::ScalingFit f = qmeta::fit_exponential_saturation(x, y);
    j = qmeta::to_json(f);
    if (f.beta > 0) j["k95"] = qmeta::k_alpha(f.beta, 0.95);
  } else if (model == "linear") {
    j = qmeta::to_json(qmeta::fit_linear(x, y));
  } else {
    throw qmeta::ConfigError("unknown model '" + model + "' (expected exp or linear)");
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int do_verify(const std::string& which, const Common& c) {
  const Config cfg = build_config("fig2-assumptions", c);
  apply_threads(c);
  qmeta::RunOptions o;
  o.out_dir = c.out.empty() ? default_out(cfg) : c.out;
  o.check = true;
  if (!c.quiet) o.log = [](const std::string& s) { std::cerr << "[qmeta] " << s << "\n"; };
  const qmeta::RunResult r = qmeta::run_experiment(cfg, o);
  std::vector<qmeta::CheckResult> picked;
  for (const auto& ch : r.checks) {
    const std::string& m = ch.spec.metric;
    const bool match = which == "all" || (which == "pl" && m.rfind("pl_", 0) == 0) ||
                       (which == "lipschitz" && m.rfind("lipschitz", 0) == 0) ||
                       (which == "separation" && m.rfind("separation", 0) == 0);
    if (match) picked.push_back(ch);
  }
  std::cout << "artifacts: " << r.dir.string() << "\n";
  print_checks(picked);
  const bool ok = std::all_of(picked.begin(), picked.end(), [](const auto& ch) { return ch.pass; });
  return ok ? 0 : kExitChecksFailed;
}

int do_check(const std::string& dir) {
  const auto checks = qmeta::check_directory(dir);
  print_checks(checks);
  if (checks.empty()) std::cout << "no checks registered for this preset\n";
  const bool ok = std::all_of(checks.begin(), checks.end(), [](const auto& ch) { return ch.pass; });
  return ok ? 0 : kExitChecksFailed;
}

int do_list() {
  for (const auto& p : qmeta::presets()) std::cout << p.name << "  " << p.description << "\n";
  std::cout << "aliases: x-gate -> fig3a, cz -> fig5, cz-tunable -> figA6-tunable, lqr -> figA2-lqr\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qmeta: meta-learned quantum control experiments"};
  app.require_subcommand(1);

  Common run_opts, verify_opts, sweep_opts;
  std::string preset, fit_path, fit_model = "exp", fit_x, fit_y, assumption, check_dir;

  auto* run = app.add_subcommand("run", "run a preset and write an artifact directory");
  run->add_option("preset", preset, "preset name (see list-presets)")->required();
  add_common(run, run_opts, true);

  app.add_subcommand("list-presets", "list the available presets");

  auto* fit = app.add_subcommand("fit", "fit a model to two CSV columns");
  fit->add_option("csv", fit_path, "input CSV with a header row")->required();
  fit->add_option("--model", fit_model, "exp (c(1-exp(-beta x))) or linear");
  fit->add_option("--x", fit_x, "x column name (default: first)");
  fit->add_option("--y", fit_y, "y column name (default: second)");

  auto* verify = app.add_subcommand("verify", "check the PL, Lipschitz and separation assumptions");
  verify->add_option("assumption", assumption, "pl, lipschitz, separation or all")
      ->required()
      ->check(CLI::IsMember({"pl", "lipschitz", "separation", "all"}));
  add_common(verify, verify_opts, false);

  auto* sweep = app.add_subcommand("lr-sweep", "inner learning-rate sweep (beta against eta)");
  add_common(sweep, sweep_opts, true);

  auto* check = app.add_subcommand("check", "re-evaluate acceptance thresholds for an artifact directory");
  check->add_option("dir", check_dir, "artifact directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return do_run(preset, run_opts);
    if (app.got_subcommand("list-presets")) return do_list();
    if (*fit) return do_fit(fit_path, fit_model, fit_x, fit_y);
    if (*verify) return do_verify(assumption, verify_opts);
    if (*sweep) return do_run("figA4-lr-sweep", sweep_opts);
    if (*check) return do_check(check_dir);
  } catch (const qmeta::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
