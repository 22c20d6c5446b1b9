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

// Index-parallel loop. Results must be written to per-index slots; callers
// reduce in index order, so output does not depend on the thread count.

#pragma once

#include <cstddef>
#include <functional>

namespace qmeta {

/// 0 selects std::thread::hardware_concurrency().
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [0, n). Rethrows the exception of the lowest failing index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace qmeta
