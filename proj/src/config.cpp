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

#include "qmeta/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "qmeta/error.hpp"
#include "qmeta/io.hpp"

namespace qmeta {

namespace {

using VT = ValueType;

std::vector<KeySpec> build_schema() {
  const std::vector<std::string> experiments = {"scaling",  "variance-sweep", "ood",           "baselines",
                                                "grape",    "training",       "assumptions",   "loss-variance",
                                                "lr-sweep", "tunable",        "lqr"};
  return {
      {"preset", VT::kString, "custom", "preset the configuration was built from", {}},
      {"experiment", VT::kString, "scaling", "experiment runner", experiments},
      {"seed", VT::kUInt, "0", "master seed", {}},
      {"scale", VT::kString, "desk", "desk or paper budgets", {"desk", "paper"}},

      {"gate.kind", VT::kString, "x-gate", "target system", {"x-gate", "cz", "cz-tunable"}},
      {"gate.n_segments", VT::kInt, "0", "GRAPE/system segments (0 = gate default)", {}},
      {"gate.horizon", VT::kDouble, "0", "gate time (0 = gate default)", {}},
      {"gate.dt", VT::kDouble, "0", "RK4 step (0 = gate default)", {}},
      {"gate.amp_max", VT::kDouble, "0", "amplitude bound (0 = gate default)", {}},
      {"gate.omega_q", VT::kDouble, "1", "qubit frequency", {}},
      {"gate.coupling", VT::kDouble, "2", "static ZZ coupling", {}},

      {"task.diversity", VT::kDouble, "1", "training support scale about the midpoint", {}},

      {"policy.hidden_dim", VT::kInt, "128", "hidden width", {}},
      {"policy.hidden_layers", VT::kInt, "2", "hidden layers", {}},
      {"policy.n_segments", VT::kInt, "60", "policy output segments", {}},
      {"policy.output_scale", VT::kDouble, "1", "tanh output scale", {}},

      {"meta.iterations", VT::kInt, "300", "outer iterations", {}},
      {"meta.batch", VT::kInt, "8", "tasks per outer iteration", {}},
      {"meta.optimizer", VT::kString, "adam", "outer optimizer", {"sgd", "adam", "adamw"}},
      {"meta.lr", VT::kDouble, "0.001", "outer learning rate", {}},
      {"meta.weight_decay", VT::kDouble, "0", "outer weight decay", {}},
      {"meta.schedule", VT::kString, "none", "outer lr schedule", {"none", "cosine"}},
      {"meta.clip", VT::kDouble, "1", "global gradient clip norm", {}},
      {"meta.eval_every", VT::kInt, "25", "validation cadence", {}},
      {"meta.val_tasks", VT::kInt, "32", "held-out validation tasks", {}},
      {"meta.checkpoint_every", VT::kInt, "0", "checkpoint cadence (0 = end only)", {}},
      {"meta.divergence_factor", VT::kDouble, "10", "divergence loss factor", {}},
      {"meta.divergence_patience", VT::kInt, "50", "divergence patience", {}},

      {"adapt.K", VT::kInt, "5", "inner steps during meta-training", {}},
      {"adapt.eta", VT::kDouble, "0.01", "inner learning rate during meta-training", {}},

      {"eval.tasks", VT::kInt, "64", "evaluation tasks", {}},
      {"eval.K_list", VT::kIntList, "0,5,10,15,20,25,30,35,40,45,50", "adaptation steps to report", {}},
      {"eval.eta", VT::kDouble, "0.01", "inner learning rate at evaluation", {}},
      {"eval.ood", VT::kDouble, "1", "evaluation noise multiplier", {}},
      {"eval.diversity", VT::kDoubleList, "1", "evaluation diversity levels", {}},
      {"eval.K_report", VT::kInt, "10", "finite K reported in summaries", {}},
      {"eval.small_variance", VT::kDouble, "0.002", "small task-variance threshold", {}},
      {"eval.K_budget", VT::kDouble, "10", "step budget for the negligible-benefit decision", {}},

      {"grape.steps", VT::kInt, "200", "GRAPE steps", {}},
      {"grape.lr", VT::kDouble, "0", "GRAPE learning rate (0 = gate default)", {}},
      {"grape.optimizer", VT::kString, "sgd", "GRAPE optimizer", {"sgd", "adam"}},
      {"grape.scratch_steps", VT::kInt, "150", "GRAPE-from-scratch budget", {}},
      {"grape.tasks", VT::kInt, "16", "tasks for per-task GRAPE", {}},

      {"lr_sweep.etas", VT::kDoubleList, "0.25,0.5,1,2,4,8", "inner learning rates", {}},
      {"lr_sweep.linear_max", VT::kDouble, "2", "upper end of the linear beta regime", {}},

      {"assumptions.pl_steps", VT::kInt, "200", "GRAPE steps for the PL trajectory", {}},
      {"assumptions.pairs", VT::kInt, "20", "random task pairs", {}},
      {"assumptions.ray_scales", VT::kDoubleList, "0,0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09",
       "offsets along the task ray", {}},
      {"assumptions.grad_tol", VT::kDouble, "0.01", "GRAPE convergence tolerance", {}},

      {"loss_variance.diversity", VT::kDoubleList, "0.25,0.5,0.75,1,1.25", "diversity levels", {}},
      {"loss_variance.tasks", VT::kInt, "24", "tasks per level", {}},

      {"lqr.sigma_m", VT::kDoubleList, "0.05,0.1,0.15,0.2,0.25,0.3", "mass standard deviations", {}},
      {"lqr.K_max", VT::kInt, "100", "adaptation steps", {}},
      {"lqr.eta", VT::kDouble, "0.01", "gain learning rate", {}},
      {"lqr.tasks", VT::kInt, "64", "masses per level", {}},
      {"lqr.K_report", VT::kInt, "10", "finite K for the variance plot", {}},

      {"tunable.J", VT::kDoubleList, "1,3,6,9", "couplings evaluated one by one", {}},

      {"output.plots", VT::kBool, "true", "emit SVG plots", {}},
  };
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, std::string_view s) {
  const std::string t = trim(s);
  T v{};
  const char* first = t.data();
  if (!t.empty() && t[0] == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("config key '" + key + "': cannot parse '" + t + "'");
  return v;
}

std::vector<std::string> split_list(std::string_view s) {
  std::string t = trim(s);
  if (t.size() >= 2 && t.front() == '[' && t.back() == ']') t = trim(std::string_view(t).substr(1, t.size() - 2));
  std::vector<std::string> out;
  if (t.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = t.find(',', start);
    out.push_back(trim(std::string_view(t).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string canonical(const KeySpec& spec, std::string_view raw) {
  const std::string& key = spec.key;
  switch (spec.type) {
    case VT::kInt:
      return std::to_string(parse_number<std::int64_t>(key, raw));
    case VT::kUInt:
      return std::to_string(parse_number<std::uint64_t>(key, raw));
    case VT::kDouble: {
      const double v = parse_number<double>(key, raw);
      if (!std::isfinite(v)) throw ConfigError("config key '" + key + "' must be finite");
      return io::format_double(v);
    }
    case VT::kBool: {
      const std::string t = trim(raw);
      if (t == "true" || t == "1" || t == "yes" || t == "on") return "true";
      if (t == "false" || t == "0" || t == "no" || t == "off") return "false";
      throw ConfigError("config key '" + key + "': expected a boolean, got '" + t + "'");
    }
    case VT::kString: {
      std::string t = trim(raw);
      if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
      if (t.find('\n') != std::string::npos) throw ConfigError("config key '" + key + "': newline in value");
      if (!spec.choices.empty() && std::find(spec.choices.begin(), spec.choices.end(), t) == spec.choices.end()) {
        std::string allowed;
        for (const auto& c : spec.choices) allowed += (allowed.empty() ? "" : ", ") + c;
        throw ConfigError("config key '" + key + "': '" + t + "' is not one of " + allowed);
      }
      return t;
    }
    case VT::kIntList:
    case VT::kDoubleList: {
      std::string out;
      for (const auto& item : split_list(raw)) {
        if (!out.empty()) out += ",";
        if (spec.type == VT::kIntList) {
          out += std::to_string(parse_number<std::int64_t>(key, item));
        } else {
          const double v = parse_number<double>(key, item);
          if (!std::isfinite(v)) throw ConfigError("config key '" + key + "' must be finite");
          out += io::format_double(v);
        }
      }
      return out;
    }
  }
  throw ConfigError("unhandled config type");
}

std::string json_scalar_text(const std::string& key, const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return io::format_double(v.get<double>());
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (item.is_array() || item.is_object()) throw ConfigError("config key '" + key + "': nested arrays are not allowed");
      out += (out.empty() ? "" : ",") + json_scalar_text(key, item);
    }
    return out;
  }
  throw ConfigError("config key '" + key + "': unsupported JSON value");
}

void flatten_json(const nlohmann::json& j, const std::string& prefix, Config& c) {
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      flatten_json(v, key, c);
    else
      c.set(key, json_scalar_text(key, v));
  }
}

const std::string& checked_value(const std::map<std::string, std::string>& values, const std::string& key,
                                 ValueType type) {
  const KeySpec& spec = key_spec(key);
  if (spec.type != type) throw ConfigError("config key '" + key + "' read with the wrong type");
  return values.at(key);
}

}  // namespace

const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema = build_schema();
  return schema;
}

const KeySpec& key_spec(const std::string& key) {
  for (const auto& s : config_schema())
    if (s.key == key) return s;
  throw ConfigError("unknown config key '" + key + "'");
}

Config::Config() {
  for (const auto& s : config_schema()) values_[s.key] = canonical(s, s.default_value);
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = canonical(key_spec(key), value); }

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), assignment.substr(eq + 1));
}

void Config::merge_text(std::string_view text) {
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    try {
      set(section.empty() ? key : section + "." + key, t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Config::merge_json(const nlohmann::json& j) { flatten_json(j, "", *this); }

Config Config::parse_text(std::string_view text) {
  Config c;
  c.merge_text(text);
  return c;
}

Config Config::parse_json(std::string_view text) {
  Config c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON config: ") + e.what());
  }
  c.merge_json(j);
  return c;
}

Config Config::parse(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') return parse_json(text);
  return parse_text(text);
}

std::int64_t Config::get_int(const std::string& key) const {
  return parse_number<std::int64_t>(key, checked_value(values_, key, VT::kInt));
}

std::uint64_t Config::get_uint(const std::string& key) const {
  return parse_number<std::uint64_t>(key, checked_value(values_, key, VT::kUInt));
}

double Config::get_double(const std::string& key) const {
  return parse_number<double>(key, checked_value(values_, key, VT::kDouble));
}

bool Config::get_bool(const std::string& key) const { return checked_value(values_, key, VT::kBool) == "true"; }

const std::string& Config::get_string(const std::string& key) const {
  return checked_value(values_, key, VT::kString);
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : split_list(checked_value(values_, key, VT::kIntList)))
    out.push_back(static_cast<int>(parse_number<std::int64_t>(key, s)));
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(checked_value(values_, key, VT::kDoubleList))) out.push_back(parse_number<double>(key, s));
  return out;
}

std::string Config::snapshot() const {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos)
      sections[""].emplace_back(k, v);
    else
      sections[k.substr(0, dot)].emplace_back(k.substr(dot + 1), v);
  }
  std::string out = "# qmeta experiment configuration\n";
  for (const auto& [name, entries] : sections) {
    if (!name.empty()) out += "\n[" + name + "]\n";
    for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  }
  return out;
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) {
    const KeySpec& spec = key_spec(k);
    nlohmann::json value;
    switch (spec.type) {
      case VT::kInt: value = get_int(k); break;
      case VT::kUInt: value = get_uint(k); break;
      case VT::kDouble: value = get_double(k); break;
      case VT::kBool: value = get_bool(k); break;
      case VT::kString: value = v; break;
      case VT::kIntList: value = get_int_list(k); break;
      case VT::kDoubleList: value = get_double_list(k); break;
    }
    const auto dot = k.find('.');
    if (dot == std::string::npos)
      j[k] = value;
    else
      j[k.substr(0, dot)][k.substr(dot + 1)] = value;
  }
  return j;
}

}  // namespace qmeta
