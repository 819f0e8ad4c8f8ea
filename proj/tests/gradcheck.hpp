#pragma once

// Central finite-difference oracle for gradient tests. Lives in test code
// only; it never touches the reverse-mode path it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "via/tensor.hpp"

namespace viatest {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "<param>[i]" of the worst element
    std::size_t checked = 0;
};

// loss_fn re-runs the full forward pass from the current parameter values.
// For every element of every parameter: central difference with step h,
// compared against the provided analytic gradient. Error metric:
// |fd - ad| / max(|fd|, |ad|, floor).
inline GradCheckResult gradcheck(
    std::vector<std::pair<std::string, via::Tensor<double>*>> params,
    const std::function<double()>& loss_fn,
    const std::function<const via::Tensor<double>&(const std::string&)>& analytic_grad,
    double h = 1e-5, double floor = 1e-7) {
    GradCheckResult res;
    for (auto& [name, tensor] : params) {
        const via::Tensor<double>& ad = analytic_grad(name);
        for (std::size_t i = 0; i < tensor->data.size(); ++i) {
            const double saved = tensor->data[i];
            const double step = h * std::max(1.0, std::abs(saved));
            tensor->data[i] = saved + step;
            const double up = loss_fn();
            tensor->data[i] = saved - step;
            const double down = loss_fn();
            tensor->data[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double a = ad.data[i];
            const double denom = std::max({std::abs(fd), std::abs(a), floor});
            const double rel = std::abs(fd - a) / denom;
            if (std::abs(fd - a) <= floor) continue;  // below resolution on both routes
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

}  // namespace viatest
