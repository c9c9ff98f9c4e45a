#include "merc/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace merc::kernels {

namespace {
int g_max_threads = 1;
}

int max_threads() { return g_max_threads; }

void set_max_threads(int n) {
    g_max_threads = n < 1 ? 1 : n;
#ifdef _OPENMP
    omp_set_num_threads(g_max_threads);
#endif
}

bool in_parallel_region() {
#ifdef _OPENMP
    return omp_in_parallel() != 0;
#else
    return false;
#endif
}

}  // namespace merc::kernels
