#include "dfl/parallel.hpp"

#include <omp.h>

namespace dfl {

int worker_count() { return omp_get_max_threads(); }

int thread_index() { return omp_get_thread_num(); }

void set_worker_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace dfl
