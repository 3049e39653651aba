/* Copyright 2026 The urlk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef URLK_PARALLEL_HPP_
#define URLK_PARALLEL_HPP_

#include <cstddef>
#include <cstdint>

namespace urlk {

// Worker count: URLK_THREADS if set and > 0, otherwise the OpenMP /
// hardware default. Read once per process.
int thread_count();

// Runs fn(i) for i in [0, count). fn must not throw. Iterations are
// independent, so the result never depends on the schedule.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const auto n = static_cast<std::int64_t>(count);
#if defined(URLK_HAVE_OPENMP)
  const int threads = thread_count();
#pragma omp parallel for schedule(static) num_threads(threads) if (n > 1 && threads > 1)
  for (std::int64_t i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
#else
  for (std::int64_t i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
#endif
}

}  // namespace urlk

#endif  // URLK_PARALLEL_HPP_
