#pragma once

// Finite-difference oracle used throughout the test suite. It is deliberately
// independent of the tape's backward pass: gradients are estimated by
// re-running the forward expression with perturbed inputs.

#include <cmath>
#include <functional>
#include <vector>

#include "merc/rng.hpp"
#include "merc/tape.hpp"

namespace merc::testing {

// Builder: given a tape and one leaf var per input, return a 1x1 loss var.
using ExprBuilder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct FdResult {
    double max_rel_err = 0;
    int input = -1, row = -1, col = -1;
    double analytic = 0, numeric = 0;
};

inline FdResult compare_grad_to_fd(std::vector<Mat<double>> inputs, const ExprBuilder& build,
                                   double step = 1e-6) {
    // analytic gradients via the tape
    std::vector<Mat<double>> grads;
    for (const auto& m : inputs) grads.emplace_back(m.rows(), m.cols());
    {
        Tape<double> t;
        std::vector<Var<double>> vars;
        for (size_t k = 0; k < inputs.size(); ++k) vars.push_back(t.param(&inputs[k], &grads[k]));
        Var<double> loss = build(t, vars);
        t.backward(loss);
    }
    auto eval = [&]() {
        Tape<double> t;
        std::vector<Var<double>> vars;
        for (auto& m : inputs) vars.push_back(t.input_ref(&m));
        return t.val(build(t, vars))(0, 0);
    };
    FdResult res;
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (int r = 0; r < inputs[k].rows(); ++r) {
            for (int c = 0; c < inputs[k].cols(); ++c) {
                const double saved = inputs[k](r, c);
                inputs[k](r, c) = saved + step;
                const double lp = eval();
                inputs[k](r, c) = saved - step;
                const double lm = eval();
                inputs[k](r, c) = saved;
                const double num = (lp - lm) / (2 * step);
                const double ana = grads[k](r, c);
                const double rel = std::fabs(ana - num) / std::max({std::fabs(ana), std::fabs(num), 1e-3});
                if (rel > res.max_rel_err) {
                    res.max_rel_err = rel;
                    res.input = static_cast<int>(k);
                    res.row = r;
                    res.col = c;
                    res.analytic = ana;
                    res.numeric = num;
                }
            }
        }
    }
    return res;
}

inline Mat<double> random_mat(int rows, int cols, RngStream& rng, double scale = 1.0) {
    Mat<double> m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

}  // namespace merc::testing

#include "merc/model/binder.hpp"

namespace merc::testing {

// grad_check closure over a ParamStore: the expression is rebuilt from the
// store on every call, so finite differences see exactly what backward sees.
template <typename Fn>
struct TapeClosure {
    Fn build;  // Var<double>(Tape<double>&, ParamBinder<double>&)
    double loss(ParamStore<double>& ps) {
        Tape<double> t;
        ParamBinder<double> P(t, ps);
        return t.val(build(t, P))(0, 0);
    }
    double loss_and_grad(ParamStore<double>& ps) {
        Tape<double> t;
        ParamBinder<double> P(t, ps);
        return t.backward(build(t, P));
    }
};

template <typename Fn>
TapeClosure<Fn> make_closure(Fn build) {
    return TapeClosure<Fn>{std::move(build)};
}

}  // namespace merc::testing
