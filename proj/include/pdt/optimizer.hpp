#pragma once

#include <cstdint>
#include <vector>

#include "pdt/tensor.hpp"

namespace pdt {

/// Adaptive-moment optimizer with decoupled weight decay. Parameters are
/// registered in groups so encoders can train at separate learning rates.
class AdamW {
public:
    explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                   double weight_decay = 0.01)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void add_group(std::vector<TensorPtr> params, double lr);
    void add_param(TensorPtr param, double lr);

    /// One update over all groups. Errors (naming the parameter) if a
    /// registered parameter has no populated gradient buffer.
    void step();
    void zero_grad();
    std::int64_t step_count() const { return step_count_; }

private:
    struct Slot {
        TensorPtr param;
        double lr;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t step_count_ = 0;
};

}  // namespace pdt
