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

// Named experiment presets, their runners, the artifact directory layout and
// the pass/fail check table.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qmeta/config.hpp"

namespace qmeta {

enum class Scale { kDesk, kPaper };

Scale parse_scale(const std::string& s);
std::string to_string(Scale s);

struct Preset {
  std::string name;
  std::string description;
  std::vector<std::string> desk;
  /// Applied on top of desk for paper scale.
  std::vector<std::string> paper;
};

const std::vector<Preset>& presets();
/// Accepts preset names and the aliases x-gate, cz, cz-tunable, lqr.
const Preset& find_preset(const std::string& name);
Config preset_config(const std::string& name, Scale scale);

struct CheckSpec {
  std::string id;
  std::string preset;
  std::string metric;
  std::string op;
  double threshold = 0.0;
  std::string description;
};

inline constexpr int kCheckTableVersion = 1;
const std::vector<CheckSpec>& check_table();

struct CheckResult {
  CheckSpec spec;
  double value = 0.0;
  bool pass = false;
};

/// Checks for the preset, evaluated on summary["metrics"]. A missing or
/// non-numeric metric fails.
std::vector<CheckResult> evaluate_checks(const std::string& preset, const nlohmann::json& summary);
nlohmann::json to_json(const std::vector<CheckResult>& checks);

struct RunOptions {
  std::filesystem::path out_dir;
  bool check = false;
  std::function<void(const std::string&)> log;
};

struct RunResult {
  std::filesystem::path dir;
  nlohmann::json summary;
  std::vector<CheckResult> checks;

  bool all_pass() const;
};

inline constexpr int kSummaryVersion = 1;
inline constexpr int kManifestVersion = 1;

/// Writes manifest.json (status running), config.snapshot, the experiment's
/// CSVs/plots, summary.json, then finalizes the manifest.
RunResult run_experiment(const Config& cfg, const RunOptions& opts);

/// Re-evaluates the check table on a finished artifact directory.
std::vector<CheckResult> check_directory(const std::filesystem::path& dir);

}  // namespace qmeta
