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

#pragma once

#include <stdexcept>
#include <string>

namespace qmeta {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (dimension mismatch, wrong parameter count).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration or physical-model constraint is violated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value, integrator drift, or a solver that failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed, corrupt, or version-mismatched file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace qmeta
