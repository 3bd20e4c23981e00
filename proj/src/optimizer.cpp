#include "pdt/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace pdt {

void AdamW::add_group(std::vector<TensorPtr> params, double lr) {
    for (auto& p : params) add_param(std::move(p), lr);
}

void AdamW::add_param(TensorPtr param, double lr) {
    if (!param) throw std::invalid_argument("optimizer: null parameter");
    Slot s;
    s.lr = lr;
    s.m.assign(param->data.size(), 0.0);
    s.v.assign(param->data.size(), 0.0);
    s.param = std::move(param);
    slots_.push_back(std::move(s));
}

void AdamW::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (auto& s : slots_) {
        Tensor& p = *s.param;
        if (p.grad.size() != p.data.size()) {
            throw std::runtime_error("optimizer: missing gradient for parameter '" + p.name + "'");
        }
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            p.data[i] -= s.lr * weight_decay_ * p.data[i];
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            p.data[i] -= s.lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.param->zero_grad();
}

}  // namespace pdt
