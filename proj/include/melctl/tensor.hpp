#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace melctl {

// Dense row-major matrix of doubles. All model math runs in 64-bit so the
// finite-difference gradient checks are meaningful.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    std::size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// C += A * B. The parallel kernel splits over output rows only, so each
// element's dot product is accumulated in the same order as the serial
// reference and the two agree bit for bit at any thread count.
void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c);
void matmul(const Matrix& a, const Matrix& b, Matrix& c);

// C += A^T * B and C += A * B^T, used by the backward passes.
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_at_b_serial(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_a_bt_serial(const Matrix& a, const Matrix& b, Matrix& c);

Matrix matmul_new(const Matrix& a, const Matrix& b);

void set_thread_cap(int n);   // <=0 resets to the OpenMP default
int thread_cap();

inline void check_shape(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("shape mismatch: " + what);
}

// Deterministic RNG used everywhere instead of std distributions, so that
// sampled values do not depend on the standard library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {
        // avoid the all-zero state
        if (state_ == 0) state_ = 0x106689d45497fdb5ULL;
        next_u64();
    }

    std::uint64_t next_u64() {
        // xorshift64* generator
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dULL;
    }

    // uniform integer in [0, n)
    std::uint64_t uniform(std::uint64_t n) { return next_u64() % n; }

    // uniform real in [0, 1)
    double uniform_real() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    // standard normal via Box-Muller
    double normal();

    // derive an independent stream
    Rng fork(std::uint64_t salt) const { return Rng(state_ ^ (salt * 0xd6e8feb86659fd93ULL)); }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace melctl
