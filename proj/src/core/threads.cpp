#include "atelier/core/threads.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace atelier {

int apply_thread_cap() {
  const char* env = std::getenv("ATELIER_THREADS");
  if (env) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0) omp_set_num_threads(cap);
    } catch (...) {
      // ignore unparseable values, keep the OpenMP default
    }
  }
  return omp_get_max_threads();
}

}  // namespace atelier
