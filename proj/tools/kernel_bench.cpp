// Microbenchmark comparing the serial reference kernels against their
// OpenMP counterparts, and reporting achieved GFLOP/s. The two paths must
// agree bitwise; this tool double-checks that while timing.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "rng.hpp"
#include "threading.hpp"

using namespace squidlet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<float> random_vec(size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.gauss(0.0, 1.0));
    return v;
}

template <class F>
double time_best_of(int reps, F&& fn) {
    double best = 1e100;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void bench_matmul(int n, int reps, Rng& rng) {
    const auto a = random_vec(static_cast<size_t>(n) * n, rng);
    const auto b = random_vec(static_cast<size_t>(n) * n, rng);
    std::vector<float> c_ref(static_cast<size_t>(n) * n), c_omp(c_ref.size());

    const double flops = 2.0 * n * static_cast<double>(n) * n;
    const double t_ref = time_best_of(reps, [&] {
        kernels::matmul_nn_ref(a.data(), b.data(), c_ref.data(), n, n, n, false);
    });
    const double t_omp = time_best_of(reps, [&] {
        kernels::matmul_nn_omp(a.data(), b.data(), c_omp.data(), n, n, n, false);
    });
    std::printf("matmul %4dx%-4d  serial %7.2f GF/s  omp %7.2f GF/s  speedup %5.2fx  %s\n", n, n,
                flops / t_ref / 1e9, flops / t_omp / 1e9, t_ref / t_omp,
                bitwise_equal(c_ref, c_omp) ? "bitwise-equal" : "MISMATCH");
}

void bench_softmax(int rows, int cols, int reps, Rng& rng) {
    const auto x = random_vec(static_cast<size_t>(rows) * cols, rng);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double t_ref = time_best_of(reps, [&] {
        kernels::softmax_rows_ref(x.data(), y_ref.data(), rows, cols, false);
    });
    const double t_omp = time_best_of(reps, [&] {
        kernels::softmax_rows_omp(x.data(), y_omp.data(), rows, cols, false);
    });
    std::printf("softmax %4dx%-4d serial %7.3f ms      omp %7.3f ms      speedup %5.2fx  %s\n",
                rows, cols, t_ref * 1e3, t_omp * 1e3, t_ref / t_omp,
                bitwise_equal(y_ref, y_omp) ? "bitwise-equal" : "MISMATCH");
}

void bench_rms(int rows, int cols, int reps, Rng& rng) {
    const auto x = random_vec(static_cast<size_t>(rows) * cols, rng);
    const auto g = random_vec(static_cast<size_t>(cols), rng);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double t_ref = time_best_of(reps, [&] {
        kernels::rms_norm_rows_ref<float>(x.data(), g.data(), y_ref.data(), rows, cols, 1e-6f, nullptr);
    });
    const double t_omp = time_best_of(reps, [&] {
        kernels::rms_norm_rows_omp<float>(x.data(), g.data(), y_omp.data(), rows, cols, 1e-6f, nullptr);
    });
    std::printf("rmsnorm %4dx%-4d serial %7.3f ms      omp %7.3f ms      speedup %5.2fx  %s\n",
                rows, cols, t_ref * 1e3, t_omp * 1e3, t_ref / t_omp,
                bitwise_equal(y_ref, y_omp) ? "bitwise-equal" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    init_threads_from_env();
    int threads = num_threads();
    int reps = 5;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--threads" && i + 1 < argc) {
            threads = std::stoi(argv[++i]);
        } else if (arg == "--reps" && i + 1 < argc) {
            reps = std::stoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: kernel_bench [--threads N] [--reps N]\n");
            return 1;
        }
    }
    set_num_threads(threads);
    std::printf("threads: %d, reps (best-of): %d\n", num_threads(), reps);

    Rng rng(7);
    for (int n : {64, 128, 256, 512}) bench_matmul(n, reps, rng);
    bench_softmax(512, 512, reps, rng);
    bench_softmax(2048, 512, reps, rng);
    bench_rms(2048, 512, reps, rng);
    return 0;
}
