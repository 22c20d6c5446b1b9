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

// Feed-forward tanh policy mapping task features to a control schedule, and
// its checkpoint file format.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qmeta/gate_kind.hpp"
#include "qmeta/gradient.hpp"
#include "qmeta/quantum.hpp"

namespace qmeta {

struct PolicyArch {
  int feature_dim = 3;
  int hidden_dim = 128;
  int hidden_layers = 2;
  int n_segments = 60;
  int n_controls = 2;
  double output_scale = 1.0;

  int output_dim() const { return n_segments * n_controls; }
  std::size_t param_count() const;
  void validate() const;
  bool operator==(const PolicyArch&) const = default;
};

/// Flat parameters. Layer l stores W_l (out x in, column-major) then b_l.
struct PolicyParams {
  PolicyArch arch;
  RealVector theta;

  void validate() const;
};

/// Normalized features. x-gate: (Gd/0.1, Gr/0.05, (Gd+Gr)/0.15);
/// cz: per-qubit (Gd/0.1, Gr/0.05); cz-tunable: J/9.
RealVector task_features(const TaskParams& xi, GateKind gate);
int feature_dim(GateKind gate);

/// Amplitudes output_scale * tanh(z), shape n_segments x n_controls.
RealMatrix forward_amplitudes(const PolicyParams& params, const RealVector& features);
ControlSchedule forward(const PolicyParams& params, const RealVector& features, double horizon,
                        double amp_max);

/// d loss / d theta from d loss / d amplitudes.
RealVector policy_vjp(const PolicyParams& params, const RealVector& features,
                      const RealMatrix& amp_grad);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
PolicyParams init_params(std::uint64_t seed, const PolicyArch& arch);

/// ScheduleMap over theta for one fixed feature vector.
class PolicyScheduleMap final : public ScheduleMap {
 public:
  PolicyScheduleMap(PolicyArch arch, RealVector features, double horizon, double amp_max);

  std::size_t param_count() const override;
  ControlSchedule forward(const RealVector& theta) const override;
  RealVector pullback(const RealVector& theta, const RealMatrix& schedule_grad) const override;

 private:
  PolicyArch arch_;
  RealVector features_;
  double horizon_;
  double amp_max_;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  PolicyParams params;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
  /// Extra payload sections, e.g. optimizer moments.
  std::map<std::string, RealVector> sections;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, unsupported version, or checksum mismatch.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qmeta
