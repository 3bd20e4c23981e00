#pragma once

// Central finite-difference gradient oracle shared by the unit and
// acceptance suites. Rebuilds the loss from scratch around perturbed
// parameter entries, so it stays independent of the autodiff path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pdt/tensor.hpp"

namespace pdt_test {

struct FdReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// `make_loss` must build a fresh scalar graph from the current values of
// `params` each time it is called.
inline FdReport fd_compare(const std::vector<pdt::TensorPtr>& params,
                           const std::function<pdt::TensorPtr()>& make_loss, double h = 1e-5) {
    for (auto& p : params) p->zero_grad();
    auto loss = make_loss();
    pdt::backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    FdReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + h;
            const double up = make_loss()->value();
            p->data[i] = saved - h;
            const double down = make_loss()->value();
            p->data[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = analytic[pi][i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - an) / denom);
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace pdt_test
