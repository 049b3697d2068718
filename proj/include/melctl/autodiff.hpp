#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "melctl/tensor.hpp"

namespace melctl {

// Reverse-mode tape over Matrix values. Node ids are indices into the tape;
// backward walks the tape in reverse creation order, which is a valid
// topological order by construction.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    int leaf(const Matrix& m);
    int leaf(Matrix&& m);

    const Matrix& val(int id) const { return nodes_[(std::size_t)id].val; }
    Matrix& grad(int id) { return nodes_[(std::size_t)id].grad; }
    const Matrix& grad(int id) const { return nodes_[(std::size_t)id].grad; }

    // primitive ops
    int matmul(int a, int b);
    int matmul_nt(int a, int b);  // a * b^T
    int add(int a, int b);
    int scale(int a, double s);
    int add_bias(int a, int bias);  // bias is 1 x C, broadcast over rows
    int hadamard(int a, int b);
    int gelu(int a);
    int layernorm(int x, int gain, int bias);
    int softmax_rows(int a);
    int slice_rows(int a, std::size_t start, std::size_t count);
    int slice_cols(int a, std::size_t start, std::size_t count);
    int concat_rows(int a, int b);
    int concat_cols(const std::vector<int>& parts);
    int mean_rows(int a);  // L x d -> 1 x d
    int sum_all(int a);    // -> 1 x 1
    int gather_rows(int table, const std::vector<int>& indices);

    // escape hatch for hand-derived losses: value plus a backward closure
    int custom(Matrix value, std::vector<int> inputs, BackwardFn backward);

    // seed d(root)/d(root) = 1 (root must be 1x1) and propagate
    void backward(int root);

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Matrix val;
        Matrix grad;
        std::vector<int> inputs;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;

    int push(Matrix value, std::vector<int> inputs, BackwardFn backward);
};

}  // namespace melctl
