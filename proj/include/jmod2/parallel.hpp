#pragma once

namespace jmod2 {

// Applies the JMOD2_THREADS cap (if set) to the OpenMP runtime. Returns the
// thread count in effect afterwards (1 when built without OpenMP).
int configure_threads_from_env();

int max_threads();

}  // namespace jmod2
