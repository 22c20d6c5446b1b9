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

// First-order optimizers for flat parameter vectors.

#pragma once

#include <string>
#include <string_view>

#include "qmeta/quantum.hpp"

namespace qmeta {

enum class OptimizerKind { kSgd, kAdam, kAdamW };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Adam: added to the gradient (L2). AdamW: decoupled, theta *= 1 - lr * wd.
  double weight_decay = 0.0;

  void validate() const;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, Eigen::Index n);

  /// One update with learning rate `lr` (the schedule's value for this step).
  void step(RealVector& params, const RealVector& grad, double lr);
  void step(RealVector& params, const RealVector& grad) { step(params, grad, cfg_.lr); }

  const OptimizerConfig& config() const { return cfg_; }
  long steps() const { return t_; }
  const RealVector& first_moment() const { return m_; }
  const RealVector& second_moment() const { return v_; }
  void restore(RealVector m, RealVector v, long steps);

 private:
  OptimizerConfig cfg_;
  RealVector m_;
  RealVector v_;
  long t_ = 0;
};

/// base * (min_ratio + (1 - min_ratio) (1 + cos(pi t / total)) / 2).
double cosine_lr(double base, long t, long total, double min_ratio = 0.0);

/// Rescales g in place so that ||g|| <= max_norm; returns the norm before clipping.
double clip_global_norm(RealVector& g, double max_norm);

}  // namespace qmeta
