#pragma once

#include <map>
#include <string>
#include <vector>

#include "melctl/tensor.hpp"

namespace melctl {

// AdamW with decoupled weight decay, optional linear warm-up and global-norm
// gradient clipping.
struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int warmup_steps = 0;
    double grad_clip = 1.0;  // <= 0 disables clipping
};

class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    struct Update {
        std::string name;
        Matrix* param;
        const Matrix* grad;
    };

    void step(const std::vector<Update>& updates);

    long long steps_taken() const { return t_; }

  private:
    AdamWConfig cfg_;
    std::map<std::string, std::pair<Matrix, Matrix>> moments_;
    long long t_ = 0;
};

}  // namespace melctl
