// Central finite-difference gradient checking for autodiff tests.

#ifndef PROCATTN_TESTS_FINITE_DIFF_HPP
#define PROCATTN_TESTS_FINITE_DIFF_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "procattn/tensor.hpp"

namespace procattn::testing {

// Central difference df/dx_i for a scalar function of a flat parameter
// vector. `eval` must not mutate its input.
inline std::vector<double> central_diff(
    const std::function<double(const std::vector<double>&)>& eval,
    std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = eval(x);
        x[i] = keep - h;
        const double down = eval(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

struct GradCheckResult {
    bool ok = true;
    double worst_rel = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Scaled comparison: |a - f| <= tol * max(1, |a|, |f|).
inline GradCheckResult compare_gradients(const std::vector<double>& analytic,
                                         const std::vector<double>& numeric,
                                         double tol) {
    GradCheckResult r;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric[i])});
        const double rel = std::fabs(analytic[i] - numeric[i]) / scale;
        if (rel > r.worst_rel) {
            r.worst_rel = rel;
            r.worst_index = i;
            r.analytic_at_worst = analytic[i];
            r.numeric_at_worst = numeric[i];
        }
        if (rel > tol) r.ok = false;
    }
    return r;
}

// Runs a full check for one parameter tensor inside an arbitrary scalar
// computation. `build` receives a tape and the parameter and returns the loss.
inline GradCheckResult check_gradient(
    Tensor param,
    const std::function<Tensor(Tape&, Tensor)>& build,
    double tol = 1e-6, double h = 1e-5) {
    Tape tape;
    Tensor loss = build(tape, param);
    param.zero_grad();
    tape.backward(loss);
    std::vector<double> analytic = param.grads();

    auto eval = [&](const std::vector<double>& x) {
        Tensor p = Tensor::from_data(param.shape(), x, false);
        Tape t(false);
        Tensor l = build(t, p);
        return l.values()[0];
    };
    std::vector<double> numeric = central_diff(eval, param.values(), h);
    return compare_gradients(analytic, numeric, tol);
}

}  // namespace procattn::testing

#endif
