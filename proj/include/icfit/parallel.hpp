#pragma once

#include <exception>
#include <mutex>

#include <Eigen/Core>

namespace icfit {

enum class Execution { serial, parallel };

// Runs body(i) for i in [0, n). In parallel mode iterations are spread over
// the OpenMP team; the first exception thrown by any iteration is rethrown on
// the calling thread once the loop has finished.
template <class Body>
void for_each_index(Eigen::Index n, Execution exec, Body&& body) {
  if (exec == Execution::serial || n < 2) {
    for (Eigen::Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// Caps the OpenMP worker pool; values < 1 leave the runtime default.
void set_thread_limit(int threads);
int thread_limit();

}  // namespace icfit
