// Benchmark comparing the serial reference kernels against the OpenMP
// versions, plus an end-to-end training step at the desk-scale widths.
// Outputs one line per (kernel, size, variant) with throughput and speedup.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "merc/kernels.hpp"
#include "merc/rng.hpp"
#include "merc/train.hpp"

using namespace merc;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

template <typename T>
void bench_matmul(const char* tag, int n, int reps) {
    RngStream rng(RngPurpose::datagen, 1);
    Mat<T> a(n, n), b(n, n), c(n, n);
    for (size_t i = 0; i < a.size(); ++i) a.data()[i] = static_cast<T>(rng.normal());
    for (size_t i = 0; i < b.size(); ++i) b.data()[i] = static_cast<T>(rng.normal());

    const double serial_ms = time_ms([&] { kernels::ref::matmul_nn(a, b, c, false); }, reps);
    const double omp_ms = time_ms([&] { kernels::omp::matmul_nn(a, b, c, false); }, reps);
    const double gflop = 2.0 * n * n * n * 1e-9;
    std::printf("matmul_nn %-4s n=%-4d serial %8.2f ms (%6.2f GF/s)   omp %8.2f ms (%6.2f GF/s)   speedup %.2fx\n",
                tag, n, serial_ms, gflop / serial_ms * 1e3, omp_ms, gflop / omp_ms * 1e3, serial_ms / omp_ms);

    Mat<T> c1(n, n), c2(n, n);
    kernels::ref::matmul_nn(a, b, c1, false);
    kernels::omp::matmul_nn(a, b, c2, false);
    if (!(c1 == c2)) std::printf("  WARNING: serial and omp results differ!\n");
}

template <typename T>
void bench_rowops(const char* tag, int rows, int cols, int reps) {
    RngStream rng(RngPurpose::datagen, 2);
    Mat<T> x(rows, cols), y(rows, cols);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<T>(rng.normal());
    const double serial_ms = time_ms([&] { kernels::ref::softmax_rows(x, y); }, reps);
    const double omp_ms = time_ms([&] { kernels::omp::softmax_rows(x, y); }, reps);
    std::printf("softmax   %-4s %dx%-5d serial %8.3f ms              omp %8.3f ms              speedup %.2fx\n",
                tag, rows, cols, serial_ms, omp_ms, serial_ms / omp_ms);
}

void bench_train_step(int threads, int reps) {
    SynthConfig sc;
    sc.n_conversations = 16;
    sc.len_lo = 10;
    sc.len_hi = 14;
    sc.seed = 7;
    Dataset ds = generate_synthetic(sc);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.threads = threads;
    cfg.seed = 7;
    kernels::set_max_threads(threads);
    Trainer<double> tr(cfg, ds);
    const double ms = time_ms([&] { tr.train_epoch(0); }, reps);
    std::printf("train epoch (16 conversations, desk widths, threads=%d): %8.2f ms\n", threads, ms);
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
    int max_threads = 2;
#ifdef _OPENMP
    max_threads = omp_get_max_threads();
#endif
    kernels::set_max_threads(max_threads);
    std::printf("threads available: %d\n", max_threads);

    const int reps = quick ? 2 : 5;
    for (int n : quick ? std::vector<int>{128, 256} : std::vector<int>{128, 256, 384}) {
        bench_matmul<double>("f64", n, reps);
        bench_matmul<float>("f32", n, reps);
    }
    bench_rowops<double>("f64", 4096, 256, reps);
    bench_train_step(1, quick ? 1 : 2);
    if (max_threads > 1) bench_train_step(max_threads, quick ? 1 : 2);
    return 0;
}
