#include "melctl/tensor.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace melctl {

namespace {
int g_thread_cap = 0;
}

void set_thread_cap(int n) {
    g_thread_cap = n > 0 ? n : 0;
#ifdef _OPENMP
    if (g_thread_cap > 0) omp_set_num_threads(g_thread_cap);
#endif
}

int thread_cap() { return g_thread_cap; }

void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c) {
    check_shape(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "matmul");
    const std::size_t n = a.rows, k = a.cols, m = b.cols;
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
    check_shape(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "matmul");
    const std::size_t n = a.rows, k = a.cols, m = b.cols;
#pragma omp parallel for schedule(static) if (n * k * m > 16384)
    for (long long ii = 0; ii < (long long)n; ++ii) {
        const std::size_t i = (std::size_t)ii;
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_at_b_serial(const Matrix& a, const Matrix& b, Matrix& c) {
    check_shape(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "matmul_at_b");
    const std::size_t n = a.rows, k = a.cols, m = b.cols;
    for (std::size_t i = 0; i < k; ++i) {
        double* ci = c.row(i);
        for (std::size_t p = 0; p < n; ++p) {
            const double av = a.at(p, i);
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& c) {
    check_shape(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "matmul_at_b");
    const std::size_t n = a.rows, k = a.cols, m = b.cols;
#pragma omp parallel for schedule(static) if (n * k * m > 16384)
    for (long long ii = 0; ii < (long long)k; ++ii) {
        const std::size_t i = (std::size_t)ii;
        double* ci = c.row(i);
        for (std::size_t p = 0; p < n; ++p) {
            const double av = a.at(p, i);
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_a_bt_serial(const Matrix& a, const Matrix& b, Matrix& c) {
    check_shape(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "matmul_a_bt");
    const std::size_t n = a.rows, k = a.cols, m = b.rows;
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] += s;
        }
    }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& c) {
    check_shape(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "matmul_a_bt");
    const std::size_t n = a.rows, k = a.cols, m = b.rows;
#pragma omp parallel for schedule(static) if (n * k * m > 16384)
    for (long long ii = 0; ii < (long long)n; ++ii) {
        const std::size_t i = (std::size_t)ii;
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] += s;
        }
    }
}

Matrix matmul_new(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    matmul(a, b, c);
    return c;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform_real() - 1.0;
        v = 2.0 * uniform_real() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
}

}  // namespace melctl
