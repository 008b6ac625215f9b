#pragma once

#include <climits>
#include <exception>

namespace dfl {

// Static-schedule loop over [0, n). Exceptions cannot cross an OpenMP region, so the one
// thrown at the smallest index is captured and rethrown after the loop.
template <class F>
void parallel_for(int n, F&& f, bool parallel = true) {
  std::exception_ptr err;
  int err_i = INT_MAX;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
#pragma omp critical(dfl_parallel_for_error)
      if (i < err_i) {
        err_i = i;
        err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
}

int worker_count();
int thread_index();
void set_worker_count(int n);

}  // namespace dfl
