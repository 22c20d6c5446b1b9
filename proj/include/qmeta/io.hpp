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

// File output helpers: hashing, RFC 4180 CSV, and minimal SVG line plots.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qmeta::io {

std::string sha256_hex(std::string_view data);
/// Hash of a git blob object ("blob <n>\0" + data).
std::string git_blob_sha1(std::string_view data);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary and renames over the target.
void write_file(const std::filesystem::path& path, std::string_view data);

/// Shortest round-trip decimal form.
std::string format_double(double x);

std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);
/// Parses RFC 4180 text into rows of fields. Throws FormatError.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  void add_numbers(const std::vector<double>& row);
  std::string str() const;
  void write(const std::filesystem::path& path) const;
};

/// Appends rows to a CSV, writing the header only when the file is new.
class CsvAppender {
 public:
  CsvAppender(std::filesystem::path path, std::vector<std::string> header);
  void append(const std::vector<double>& row);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::size_t width_;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = true;
  bool line = true;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

std::string render_svg(const PlotSpec& spec);
void write_svg(const std::filesystem::path& path, const PlotSpec& spec);

}  // namespace qmeta::io
