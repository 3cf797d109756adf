#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pauselab/tensor.hpp"

namespace pauselab {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double tol = 0.0;
    bool pass = false;
};

/// Compares analytic gradients against central finite differences
/// (f(x+h) - f(x-h)) / 2h, elementwise over every listed parameter.
/// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
///
/// `loss` must be a deterministic scalar function of the parameters. It is
/// called once with `with_grad = true` (build the graph, run backward so
/// Tensor::grad is populated) and then twice per parameter element with
/// `with_grad = false` (forward value only). Meaningful only at 64-bit.
inline GradCheckReport grad_check(const std::function<double(bool with_grad)>& loss,
                                  const std::vector<NamedParam<double>>& params,
                                  double h = 1e-5, double tol = 1e-4) {
    for (const auto& p : params) {
        p.tensor->zero_grad();
    }
    loss(true);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        p.tensor->ensure_grad();
        analytic.push_back(p.tensor->grad);
    }

    GradCheckReport rep;
    rep.tol = tol;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>& t = *params[pi].tensor;
        for (size_t i = 0; i < t.data.size(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + h;
            const double fp = loss(false);
            t.data[i] = saved - h;
            const double fm = loss(false);
            t.data[i] = saved;

            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[pi].name;
                rep.worst_index = static_cast<int>(i);
            }
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

} // namespace pauselab
