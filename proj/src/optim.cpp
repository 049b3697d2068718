#include "melctl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace melctl {

void AdamW::step(const std::vector<Update>& updates) {
    ++t_;
    double lr = cfg_.lr;
    if (cfg_.warmup_steps > 0 && t_ <= cfg_.warmup_steps)
        lr *= (double)t_ / (double)cfg_.warmup_steps;

    double clip_scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
        double norm2 = 0.0;
        for (const Update& u : updates)
            for (double g : u.grad->data) norm2 += g * g;
        const double norm = std::sqrt(norm2);
        if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
    }

    const double bc1 = 1.0 - std::pow(cfg_.beta1, (double)t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, (double)t_);

    for (const Update& u : updates) {
        check_shape(u.param->same_shape(*u.grad), "adamw update " + u.name);
        auto [it, inserted] = moments_.try_emplace(
            u.name, std::make_pair(Matrix(u.param->rows, u.param->cols),
                                   Matrix(u.param->rows, u.param->cols)));
        Matrix& m = it->second.first;
        Matrix& v = it->second.second;
        for (std::size_t i = 0; i < u.param->size(); ++i) {
            const double g = u.grad->data[i] * clip_scale;
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in " + u.name + " at step " +
                                         std::to_string(t_));
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            u.param->data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                      cfg_.weight_decay * u.param->data[i]);
        }
    }
}

}  // namespace melctl
