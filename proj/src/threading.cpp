#include "threading.hpp"

#include <cstdlib>
#include <string>

namespace squidlet {

namespace {
int g_threads = 1;
}

int num_threads() {
    return g_threads;
}

void set_num_threads(int n) {
    g_threads = n < 1 ? 1 : n;
}

void init_threads_from_env() {
    const char* env = std::getenv("SQUIDLET_THREADS");
    if (env == nullptr || *env == '\0') return;
    try {
        set_num_threads(std::stoi(env));
    } catch (...) {
        g_threads = 1;
    }
}

} // namespace squidlet
