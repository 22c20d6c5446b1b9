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

#include "qmeta/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qmeta/error.hpp"

namespace qmeta {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "adamw") return OptimizerKind::kAdamW;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd, adam, adamw)");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kAdamW: return "adamw";
  }
  throw ConfigError("unknown optimizer kind");
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
}

Optimizer::Optimizer(OptimizerConfig cfg, Eigen::Index n)
    : cfg_(cfg), m_(RealVector::Zero(n)), v_(RealVector::Zero(n)) {
  cfg_.validate();
}

void Optimizer::step(RealVector& params, const RealVector& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ShapeError("optimizer parameter/gradient size mismatch");
  if (!grad.allFinite()) throw NumericError("non-finite gradient passed to optimizer");
  ++t_;
  if (cfg_.kind == OptimizerKind::kSgd) {
    if (cfg_.weight_decay > 0.0)
      params -= lr * (grad + cfg_.weight_decay * params);
    else
      params -= lr * grad;
    return;
  }
  RealVector g = grad;
  if (cfg_.kind == OptimizerKind::kAdam && cfg_.weight_decay > 0.0) g += cfg_.weight_decay * params;
  if (cfg_.kind == OptimizerKind::kAdamW && cfg_.weight_decay > 0.0) params *= 1.0 - lr * cfg_.weight_decay;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double step = lr / bc1;
  params.array() -= step * m_.array() / ((v_.array() / bc2).sqrt() + cfg_.eps);
}

void Optimizer::restore(RealVector m, RealVector v, long steps) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeError("optimizer state size mismatch");
  if (steps < 0) throw ConfigError("optimizer step count must be >= 0");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = steps;
}

double cosine_lr(double base, long t, long total, double min_ratio) {
  if (total <= 0) return base;
  const double frac = std::clamp(static_cast<double>(t) / static_cast<double>(total), 0.0, 1.0);
  return base * (min_ratio + (1.0 - min_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

double clip_global_norm(RealVector& g, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be > 0");
  const double n = g.norm();
  if (n > max_norm) g *= max_norm / n;
  return n;
}

}  // namespace qmeta
