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

#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "qmeta/error.hpp"
#include "qmeta/experiments.hpp"
#include "qmeta/io.hpp"
#include "qmeta/parallel.hpp"

using namespace qmeta;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qmeta_exp_" + name);
  fs::remove_all(p);
  return p;
}

Config tiny_scaling() {
  Config c = preset_config("fig3a", Scale::kDesk);
  for (const char* a : {"meta.iterations=4", "meta.batch=2", "policy.hidden_dim=8", "policy.hidden_layers=1",
                        "policy.n_segments=10", "meta.eval_every=2", "meta.val_tasks=2", "eval.tasks=4",
                        "eval.K_list=0,1,2,3,4", "adapt.K=1"})
    c.set_assignment(a);
  return c;
}

}  // namespace

TEST_CASE("lqr run writes a self-describing directory") {
  const fs::path dir = scratch_dir("lqr");
  const RunResult r = run_experiment(preset_config("lqr", Scale::kDesk), {dir, true, {}});
  CHECK(r.all_pass());
  const json m = json::parse(io::read_file(dir / "manifest.json"));
  CHECK(m["status"] == "complete");
  CHECK(m["schema_version"] == kManifestVersion);
  CHECK(m["config_hash"] == io::git_blob_sha1(io::read_file(dir / "config.snapshot")));
  REQUIRE(m["artifacts"].size() >= 5);
  for (const auto& a : m["artifacts"]) {
    const std::string data = io::read_file(dir / a["path"].get<std::string>());
    CHECK(a["sha256"] == io::sha256_hex(data));
    CHECK(a["bytes"] == data.size());
  }
  const auto checks = check_directory(dir);
  REQUIRE(checks.size() == 2);
  for (const auto& c : checks) CHECK(c.pass);

  // The snapshot alone reproduces the run.
  const fs::path again = scratch_dir("lqr_again");
  run_experiment(Config::parse(io::read_file(dir / "config.snapshot")), {again, false, {}});
  CHECK(io::read_file(again / "fits.csv") == io::read_file(dir / "fits.csv"));
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST_CASE("invalid config leaves no artifacts") {
  const fs::path dir = scratch_dir("invalid");
  Config c = preset_config("fig3a", Scale::kDesk);
  c.set("eval.K_list", "1,2,3");
  CHECK_THROWS_AS(run_experiment(c, {dir, false, {}}), ConfigError);
  Config d = preset_config("fig3a", Scale::kDesk);
  d.set("policy.output_scale", "50");
  CHECK_THROWS_AS(run_experiment(d, {dir, false, {}}), ConfigError);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("tiny scaling run is deterministic across thread counts") {
  const fs::path a = scratch_dir("tiny_a"), b = scratch_dir("tiny_b");
  set_thread_count(1);
  const RunResult ra = run_experiment(tiny_scaling(), {a, true, {}});
  set_thread_count(3);
  run_experiment(tiny_scaling(), {b, true, {}});
  set_thread_count(0);
  for (const char* f : {"gap_curve.csv", "gap_per_task.csv", "fomaml_log.csv", "fomaml.ckpt", "gap_fit.json"})
    CHECK(io::read_file(a / f) == io::read_file(b / f));
  CHECK(ra.summary["metrics"].contains("gap_fit_r2"));
  CHECK(ra.summary["metrics"]["fidelity_pre"].get<double>() > 0.0);
  REQUIRE(ra.checks.size() == 1);
  CHECK(ra.checks[0].spec.id == "C5.gap-fit");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("plots off writes no SVG and leaves data unchanged") {
  const fs::path a = scratch_dir("plots_on"), b = scratch_dir("plots_off");
  run_experiment(preset_config("lqr", Scale::kDesk), {a, false, {}});
  Config c = preset_config("lqr", Scale::kDesk);
  c.set("output.plots", "false");
  run_experiment(c, {b, false, {}});
  for (const auto& e : fs::directory_iterator(b)) CHECK(e.path().extension() != ".svg");
  CHECK(io::read_file(a / "gap_curves.csv") == io::read_file(b / "gap_curves.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("missing metrics fail their checks") {
  const auto r = evaluate_checks("fig3b", json{{"metrics", {{"asymptote_fit_r2", 0.9}}}});
  REQUIRE(r.size() == 2);
  CHECK(r[0].pass);
  CHECK_FALSE(r[1].pass);
  CHECK(evaluate_checks("fig3a", json::object()).size() == 1);
}

TEST_CASE("check table covers the acceptance presets") {
  for (const char* p : {"figA2-lqr", "fig3a", "fig3b", "fig5", "fig2-assumptions", "fig4", "figA5-grape"}) {
    bool found = false;
    for (const auto& c : check_table()) found = found || c.preset == p;
    CHECK_MESSAGE(found, p);
  }
  for (const auto& c : check_table()) CHECK_NOTHROW(find_preset(c.preset));
}

TEST_CASE("check_directory rejects unfinished runs") {
  const fs::path dir = scratch_dir("unfinished");
  io::write_file(dir / "manifest.json", R"({"schema_version": 1, "status": "running", "preset": "fig3a"})");
  CHECK_THROWS_AS(check_directory(dir), FormatError);
  io::write_file(dir / "manifest.json", R"({"schema_version": 99, "status": "complete", "preset": "fig3a"})");
  CHECK_THROWS_AS(check_directory(dir), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("lr sweep: eta = 0 gives a flat gap and is left out of the spread") {
  const fs::path dir = scratch_dir("sweep");
  Config c = preset_config("figA4-lr-sweep", Scale::kDesk);
  for (const char* a : {"meta.iterations=2", "meta.batch=2", "policy.hidden_dim=8", "policy.hidden_layers=1",
                        "policy.n_segments=10", "meta.val_tasks=2", "eval.tasks=3", "eval.K_list=0,10,20,30",
                        "lr_sweep.etas=0,0.5,1,2", "lr_sweep.linear_max=1"})
    c.set_assignment(a);
  const RunResult r = run_experiment(c, {dir, true, {}});
  const auto rows = io::parse_csv(io::read_file(dir / "lr_sweep.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[1][0] == "0");
  CHECK(rows[1][2] == "0");
  CHECK(r.summary["metrics"]["beta_eta_slope"].get<double>() > 0.0);
  std::vector<double> cs;
  for (std::size_t i = 2; i < rows.size(); ++i) cs.push_back(std::stod(rows[i][1]));
  const auto [lo, hi] = std::minmax_element(cs.begin(), cs.end());
  const double mean = (cs[0] + cs[1] + cs[2]) / 3.0;
  CHECK(r.summary["metrics"]["asymptote_spread"].get<double>() == doctest::Approx((*hi - *lo) / mean).epsilon(1e-12));
  fs::remove_all(dir);
}
