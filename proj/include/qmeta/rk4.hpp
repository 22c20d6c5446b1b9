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

// Batched RK4 on vectorized density matrices. Shared by forward propagation
// and the reverse-mode gradient pass.

#pragma once

#include <vector>

#include "qmeta/quantum.hpp"

namespace qmeta::rk4 {

/// S(u) = base + sum_k u_k control_ops[k], all d^2 x d^2.
struct Generator {
  Eigen::Index dim = 0;
  ComplexMatrix base;
  std::vector<ComplexMatrix> control_ops;
  std::vector<ComplexMatrix> control_hamiltonians;

  void assemble(const RealVector& u, ComplexMatrix& out) const;
};

Generator make_generator(const QuantumSystem& system, const TaskParams& xi);

/// Scratch buffers sized for one batch; reused across steps.
struct Workspace {
  ComplexMatrix k, acc, stage;
  void resize(Eigen::Index rows, Eigen::Index cols);
};

/// One classical RK4 step of states' = S states, in place. Each column of
/// `states` is a vec(rho).
void step(const ComplexMatrix& s, double h, ComplexMatrix& states, Workspace& ws);

/// States stacked as columns of a d^2 x B matrix.
ComplexMatrix stack(const std::vector<ComplexMatrix>& rhos);

}  // namespace qmeta::rk4
