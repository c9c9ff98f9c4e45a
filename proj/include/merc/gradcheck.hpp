#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "merc/params.hpp"

namespace merc {

struct GradCheckEntry {
    std::string name;
    double rel_err = 0;     // worst entry of this parameter
    double analytic = 0;    // analytic gradient at the worst entry
    double numeric = 0;     // central difference at the worst entry
    int row = 0, col = 0;   // location of the worst entry
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    double max_rel_err = 0;
    std::string worst_param;
    double step = 0, tol = 0;
    bool pass = false;
};

// Entries whose analytic and numeric gradients are both below this magnitude
// are compared against the floor instead of each other; central differences
// bottom out around 1e-7 absolute for losses of order 1, so ratios of tiny
// values are noise, not signal.
inline constexpr double kGradCheckDenomFloor = 1e-3;

/// Compares analytic gradients against central finite differences for every
/// scalar entry of every parameter. The closure must expose
///   double loss(const ParamStore<double>&)          -- forward only
///   double loss_and_grad(ParamStore<double>&)       -- forward + gradients
/// and be deterministic; determinism is verified by running the forward
/// twice and requiring exact equality.
template <typename Closure>
GradCheckReport grad_check(Closure&& model, ParamStore<double>& params, double step, double tol) {
    if (!(step > 0)) throw ConfigError("grad_check: step must be > 0");
    if (!(tol > 0)) throw ConfigError("grad_check: tol must be > 0");

    const double l0 = model.loss(params);
    const double l1 = model.loss(params);
    if (l0 != l1)
        throw DeterminismError("closure returned " + format_g17(l0) + " then " + format_g17(l1) +
                               " for identical parameters");

    params.zero_grads();
    model.loss_and_grad(params);

    GradCheckReport report;
    report.step = step;
    report.tol = tol;
    for (auto& [name, entry] : params) {
        GradCheckEntry worst;
        worst.name = name;
        worst.rel_err = -1;
        for (int r = 0; r < entry.value.rows(); ++r) {
            for (int c = 0; c < entry.value.cols(); ++c) {
                const double saved = entry.value(r, c);
                entry.value(r, c) = saved + step;
                const double lp = model.loss(params);
                entry.value(r, c) = saved - step;
                const double lm = model.loss(params);
                entry.value(r, c) = saved;
                const double num = (lp - lm) / (2.0 * step);
                const double ana = entry.grad(r, c);
                const double denom = std::max({std::fabs(ana), std::fabs(num), kGradCheckDenomFloor});
                const double rel = std::fabs(ana - num) / denom;
                if (rel > worst.rel_err) {
                    worst.rel_err = rel;
                    worst.analytic = ana;
                    worst.numeric = num;
                    worst.row = r;
                    worst.col = c;
                }
            }
        }
        if (worst.rel_err < 0) worst.rel_err = 0;
        if (worst.rel_err > report.max_rel_err) {
            report.max_rel_err = worst.rel_err;
            report.worst_param = name;
        }
        report.per_param.push_back(std::move(worst));
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace merc
