// Compares the serial reference matmul kernels against the OpenMP versions
// and checks that they agree bit for bit.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "melctl/tensor.hpp"

using namespace melctl;

namespace {

double run_ms(void (*kernel)(const Matrix&, const Matrix&, Matrix&), const Matrix& a,
              const Matrix& b, Matrix& c, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) {
        std::fill(c.data.begin(), c.data.end(), 0.0);
        kernel(a, b, c);
    }
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::atoi(argv[1]);

    std::printf("%-10s %-8s %12s %12s %8s %s\n", "kernel", "size", "serial_ms",
                "parallel_ms", "speedup", "bit_identical");
    const int sizes[] = {64, 128, 256, 512};
    struct K {
        const char* name;
        void (*serial)(const Matrix&, const Matrix&, Matrix&);
        void (*parallel)(const Matrix&, const Matrix&, Matrix&);
    };
    const K kernels[] = {
        {"matmul", matmul_serial, matmul},
        {"at_b", matmul_at_b_serial, matmul_at_b},
        {"a_bt", matmul_a_bt_serial, matmul_a_bt},
    };

    bool all_ok = true;
    for (const K& k : kernels) {
        for (int n : sizes) {
            Rng rng((std::uint64_t)n * 977 + 13);
            Matrix a((std::size_t)n, (std::size_t)n), b((std::size_t)n, (std::size_t)n);
            for (double& x : a.data) x = rng.normal();
            for (double& x : b.data) x = rng.normal();
            Matrix cs((std::size_t)n, (std::size_t)n), cp((std::size_t)n, (std::size_t)n);

            const double ts = run_ms(k.serial, a, b, cs, reps);
            const double tp = run_ms(k.parallel, a, b, cp, reps);
            const bool same = std::memcmp(cs.data.data(), cp.data.data(),
                                          cs.size() * sizeof(double)) == 0;
            all_ok = all_ok && same;
            std::printf("%-10s %-8d %12.3f %12.3f %7.2fx %s\n", k.name, n, ts, tp,
                        ts / tp, same ? "yes" : "NO");
        }
    }
    return all_ok ? 0 : 1;
}
