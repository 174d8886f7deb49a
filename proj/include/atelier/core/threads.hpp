#pragma once

namespace atelier {

// Applies the ATELIER_THREADS env var (when set and positive) as the OpenMP
// thread cap. Returns the effective thread count.
int apply_thread_cap();

}  // namespace atelier
