#include "melctl/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace melctl {

int Tape::push(Matrix value, std::vector<int> inputs, BackwardFn backward) {
    Node n;
    n.val = std::move(value);
    n.grad = Matrix(n.val.rows, n.val.cols);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return (int)nodes_.size() - 1;
}

int Tape::leaf(const Matrix& m) { return push(m, {}, nullptr); }
int Tape::leaf(Matrix&& m) { return push(std::move(m), {}, nullptr); }

int Tape::custom(Matrix value, std::vector<int> inputs, BackwardFn backward) {
    return push(std::move(value), std::move(inputs), std::move(backward));
}

int Tape::matmul(int a, int b) {
    Matrix c(val(a).rows, val(b).cols);
    melctl::matmul(val(a), val(b), c);
    return push(std::move(c), {a, b}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const int b = t.nodes_[(std::size_t)self].inputs[1];
        const Matrix& g = t.grad(self);
        matmul_a_bt(g, t.val(b), t.grad(a));   // dA += G * B^T
        matmul_at_b(t.val(a), g, t.grad(b));   // dB += A^T * G
    });
}

int Tape::matmul_nt(int a, int b) {
    Matrix c(val(a).rows, val(b).rows);
    matmul_a_bt(val(a), val(b), c);
    return push(std::move(c), {a, b}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const int b = t.nodes_[(std::size_t)self].inputs[1];
        const Matrix& g = t.grad(self);
        melctl::matmul(g, t.val(b), t.grad(a));   // dA += G * B
        matmul_at_b(g, t.val(a), t.grad(b));      // dB += G^T * A
    });
}

int Tape::add(int a, int b) {
    check_shape(val(a).same_shape(val(b)), "tape add");
    Matrix c = val(a);
    const Matrix& vb = val(b);
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += vb.data[i];
    return push(std::move(c), {a, b}, [](Tape& t, int self) {
        const auto& in = t.nodes_[(std::size_t)self].inputs;
        const Matrix& g = t.grad(self);
        for (int which : in) {
            Matrix& gi = t.grad(which);
            for (std::size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i];
        }
    });
}

int Tape::scale(int a, double s) {
    Matrix c = val(a);
    for (double& x : c.data) x *= s;
    return push(std::move(c), {a}, [s](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += s * g.data[i];
    });
}

int Tape::add_bias(int a, int bias) {
    check_shape(val(bias).rows == 1 && val(bias).cols == val(a).cols, "tape add_bias");
    Matrix c = val(a);
    const Matrix& b = val(bias);
    for (std::size_t r = 0; r < c.rows; ++r)
        for (std::size_t j = 0; j < c.cols; ++j) c.at(r, j) += b.at(0, j);
    return push(std::move(c), {a, bias}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const int bias = t.nodes_[(std::size_t)self].inputs[1];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        Matrix& gb = t.grad(bias);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        for (std::size_t r = 0; r < g.rows; ++r)
            for (std::size_t j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(r, j);
    });
}

int Tape::hadamard(int a, int b) {
    check_shape(val(a).same_shape(val(b)), "tape hadamard");
    Matrix c = val(a);
    const Matrix& vb = val(b);
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= vb.data[i];
    return push(std::move(c), {a, b}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const int b = t.nodes_[(std::size_t)self].inputs[1];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        Matrix& gb = t.grad(b);
        const Matrix& va = t.val(a);
        const Matrix& vb = t.val(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.data[i] += g.data[i] * vb.data[i];
            gb.data[i] += g.data[i] * va.data[i];
        }
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}

int Tape::gelu(int a) {
    Matrix c = val(a);
    for (double& x : c.data) {
        const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
        x = 0.5 * x * (1.0 + t);
    }
    return push(std::move(c), {a}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        const Matrix& va = t.val(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = va.data[i];
            const double u = kGeluC * (x + 0.044715 * x * x * x);
            const double th = std::tanh(u);
            const double d =
                0.5 * (1.0 + th) +
                0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
            ga.data[i] += g.data[i] * d;
        }
    });
}

int Tape::layernorm(int x, int gain, int bias) {
    const Matrix& vx = val(x);
    const std::size_t d = vx.cols;
    check_shape(val(gain).rows == 1 && val(gain).cols == d, "layernorm gain");
    check_shape(val(bias).rows == 1 && val(bias).cols == d, "layernorm bias");
    constexpr double eps = 1e-5;
    Matrix c(vx.rows, d);
    for (std::size_t r = 0; r < vx.rows; ++r) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += vx.at(r, j);
        mu /= (double)d;
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = vx.at(r, j) - mu;
            var += dv * dv;
        }
        var /= (double)d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j)
            c.at(r, j) = val(gain).at(0, j) * (vx.at(r, j) - mu) * inv + val(bias).at(0, j);
    }
    return push(std::move(c), {x, gain, bias}, [](Tape& t, int self) {
        const int x = t.nodes_[(std::size_t)self].inputs[0];
        const int gain = t.nodes_[(std::size_t)self].inputs[1];
        const int bias = t.nodes_[(std::size_t)self].inputs[2];
        const Matrix& g = t.grad(self);
        const Matrix& vx = t.val(x);
        const Matrix& vg = t.val(gain);
        Matrix& gx = t.grad(x);
        Matrix& gG = t.grad(gain);
        Matrix& gB = t.grad(bias);
        const std::size_t d = vx.cols;
        constexpr double eps = 1e-5;
        for (std::size_t r = 0; r < vx.rows; ++r) {
            double mu = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += vx.at(r, j);
            mu /= (double)d;
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double dv = vx.at(r, j) - mu;
                var += dv * dv;
            }
            var /= (double)d;
            const double inv = 1.0 / std::sqrt(var + eps);
            double m1 = 0.0, m2 = 0.0;  // mean(gy*gain), mean(gy*gain*xhat)
            for (std::size_t j = 0; j < d; ++j) {
                const double xhat = (vx.at(r, j) - mu) * inv;
                const double gy = g.at(r, j);
                const double gyg = gy * vg.at(0, j);
                m1 += gyg;
                m2 += gyg * xhat;
                gG.at(0, j) += gy * xhat;
                gB.at(0, j) += gy;
            }
            m1 /= (double)d;
            m2 /= (double)d;
            for (std::size_t j = 0; j < d; ++j) {
                const double xhat = (vx.at(r, j) - mu) * inv;
                gx.at(r, j) += (g.at(r, j) * vg.at(0, j) - m1 - xhat * m2) * inv;
            }
        }
    });
}

int Tape::softmax_rows(int a) {
    Matrix c = val(a);
    for (std::size_t r = 0; r < c.rows; ++r) {
        double mx = c.at(r, 0);
        for (std::size_t j = 1; j < c.cols; ++j) mx = std::max(mx, c.at(r, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c.cols; ++j) {
            c.at(r, j) = std::exp(c.at(r, j) - mx);
            sum += c.at(r, j);
        }
        for (std::size_t j = 0; j < c.cols; ++j) c.at(r, j) /= sum;
    }
    return push(std::move(c), {a}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const Matrix& y = t.val(self);
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        for (std::size_t r = 0; r < y.rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols; ++j) dot += g.at(r, j) * y.at(r, j);
            for (std::size_t j = 0; j < y.cols; ++j)
                ga.at(r, j) += y.at(r, j) * (g.at(r, j) - dot);
        }
    });
}

int Tape::slice_rows(int a, std::size_t start, std::size_t count) {
    const Matrix& v = val(a);
    check_shape(start + count <= v.rows, "slice_rows");
    Matrix c(count, v.cols);
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t j = 0; j < v.cols; ++j) c.at(r, j) = v.at(start + r, j);
    return push(std::move(c), {a}, [start](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        for (std::size_t r = 0; r < g.rows; ++r)
            for (std::size_t j = 0; j < g.cols; ++j) ga.at(start + r, j) += g.at(r, j);
    });
}

int Tape::slice_cols(int a, std::size_t start, std::size_t count) {
    const Matrix& v = val(a);
    check_shape(start + count <= v.cols, "slice_cols");
    Matrix c(v.rows, count);
    for (std::size_t r = 0; r < v.rows; ++r)
        for (std::size_t j = 0; j < count; ++j) c.at(r, j) = v.at(r, start + j);
    return push(std::move(c), {a}, [start](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        for (std::size_t r = 0; r < g.rows; ++r)
            for (std::size_t j = 0; j < g.cols; ++j) ga.at(r, start + j) += g.at(r, j);
    });
}

int Tape::concat_rows(int a, int b) {
    const Matrix& va = val(a);
    const Matrix& vb = val(b);
    check_shape(va.cols == vb.cols, "concat_rows");
    Matrix c(va.rows + vb.rows, va.cols);
    for (std::size_t i = 0; i < va.size(); ++i) c.data[i] = va.data[i];
    for (std::size_t i = 0; i < vb.size(); ++i) c.data[va.size() + i] = vb.data[i];
    return push(std::move(c), {a, b}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const int b = t.nodes_[(std::size_t)self].inputs[1];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        Matrix& gb = t.grad(b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[ga.size() + i];
    });
}

int Tape::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    std::size_t cols = 0;
    const std::size_t rows = val(parts[0]).rows;
    for (int p : parts) {
        check_shape(val(p).rows == rows, "concat_cols");
        cols += val(p).cols;
    }
    Matrix c(rows, cols);
    std::size_t off = 0;
    for (int p : parts) {
        const Matrix& v = val(p);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < v.cols; ++j) c.at(r, off + j) = v.at(r, j);
        off += v.cols;
    }
    return push(std::move(c), parts, [](Tape& t, int self) {
        const auto& in = t.nodes_[(std::size_t)self].inputs;
        const Matrix& g = t.grad(self);
        std::size_t off = 0;
        for (int p : in) {
            Matrix& gp = t.grad(p);
            for (std::size_t r = 0; r < gp.rows; ++r)
                for (std::size_t j = 0; j < gp.cols; ++j) gp.at(r, j) += g.at(r, off + j);
            off += gp.cols;
        }
    });
}

int Tape::mean_rows(int a) {
    const Matrix& v = val(a);
    Matrix c(1, v.cols);
    for (std::size_t r = 0; r < v.rows; ++r)
        for (std::size_t j = 0; j < v.cols; ++j) c.at(0, j) += v.at(r, j);
    for (std::size_t j = 0; j < v.cols; ++j) c.at(0, j) /= (double)v.rows;
    return push(std::move(c), {a}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        const double inv = 1.0 / (double)ga.rows;
        for (std::size_t r = 0; r < ga.rows; ++r)
            for (std::size_t j = 0; j < ga.cols; ++j) ga.at(r, j) += g.at(0, j) * inv;
    });
}

int Tape::sum_all(int a) {
    const Matrix& v = val(a);
    Matrix c(1, 1);
    for (double x : v.data) c.data[0] += x;
    return push(std::move(c), {a}, [](Tape& t, int self) {
        const int a = t.nodes_[(std::size_t)self].inputs[0];
        const double g = t.grad(self).data[0];
        Matrix& ga = t.grad(a);
        for (double& x : ga.data) x += g;
    });
}

int Tape::gather_rows(int table, const std::vector<int>& indices) {
    const Matrix& v = val(table);
    Matrix c(indices.size(), v.cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        check_shape(indices[r] >= 0 && (std::size_t)indices[r] < v.rows, "gather_rows index");
        for (std::size_t j = 0; j < v.cols; ++j) c.at(r, j) = v.at((std::size_t)indices[r], j);
    }
    return push(std::move(c), {table}, [indices](Tape& t, int self) {
        const int table = t.nodes_[(std::size_t)self].inputs[0];
        const Matrix& g = t.grad(self);
        Matrix& gt = t.grad(table);
        for (std::size_t r = 0; r < indices.size(); ++r)
            for (std::size_t j = 0; j < g.cols; ++j)
                gt.at((std::size_t)indices[r], j) += g.at(r, j);
    });
}

void Tape::backward(int root) {
    check_shape(val(root).rows == 1 && val(root).cols == 1, "backward root must be scalar");
    for (Node& n : nodes_) {
        for (double& x : n.grad.data) x = 0.0;
    }
    nodes_[(std::size_t)root].grad.data[0] = 1.0;
    for (int i = root; i >= 0; --i) {
        if (nodes_[(std::size_t)i].backward) nodes_[(std::size_t)i].backward(*this, i);
    }
}

}  // namespace melctl
