#pragma once

namespace squidlet {

// Worker-thread cap for the parallel kernels and evaluation fan-out.
// Initialized from SQUIDLET_THREADS (default 1). Results are bitwise
// identical for any setting: parallel loops split work across disjoint
// output elements and each element keeps its serial reduction order.
int num_threads();
void set_num_threads(int n);
void init_threads_from_env();

} // namespace squidlet
