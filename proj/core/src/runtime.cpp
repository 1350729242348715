#include "ntr/common.hpp"

#include <thread>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ntr {

namespace {
int g_threads = 0;
}

void set_num_threads(int n) {
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    g_threads = n;
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
    Eigen::setNbThreads(n);
}

int num_threads() {
    if (g_threads == 0) set_num_threads(0);
    return g_threads;
}

} // namespace ntr
