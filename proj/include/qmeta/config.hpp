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

// Experiment configuration: a flat, schema-checked map of dotted keys.
// Text form groups keys under [section] headers; JSON nests objects.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace qmeta {

enum class ValueType { kInt, kUInt, kDouble, kBool, kString, kIntList, kDoubleList };

struct KeySpec {
  std::string key;
  ValueType type = ValueType::kString;
  std::string default_value;
  std::string help;
  /// Allowed values for string keys (empty = any).
  std::vector<std::string> choices;
};

const std::vector<KeySpec>& config_schema();
const KeySpec& key_spec(const std::string& key);

class Config {
 public:
  /// Every key at its schema default.
  Config();

  /// Validates the key and value, then stores the canonical form.
  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void set_assignment(const std::string& assignment);
  void merge_text(std::string_view text);
  void merge_json(const nlohmann::json& j);

  static Config parse_text(std::string_view text);
  static Config parse_json(std::string_view text);
  /// JSON when the first non-space character is '{', text otherwise.
  static Config parse(std::string_view text);

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  /// Canonical text form; parse_text(snapshot()) reproduces this config.
  std::string snapshot() const;
  nlohmann::json to_json() const;

  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const Config& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace qmeta
