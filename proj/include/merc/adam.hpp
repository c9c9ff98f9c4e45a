#pragma once

#include <cmath>
#include <map>

#include "merc/params.hpp"

namespace merc {

/// Adam optimizer with bias correction. Moments are kept per parameter name;
/// updates walk the store in its (lexicographic) order, so a step is a pure
/// function of (parameters, gradients, state).
template <typename T>
class Adam {
  public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    double learning_rate() const { return lr_; }

    void step(ParamStore<T>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& [name, e] : params) {
            auto& st = state_[name];
            if (st.m.empty()) {
                st.m = Mat<T>(e.value.rows(), e.value.cols());
                st.v = Mat<T>(e.value.rows(), e.value.cols());
            }
            for (size_t i = 0; i < e.value.size(); ++i) {
                const T g = e.grad.data()[i];
                T& m = st.m.data()[i];
                T& v = st.v.data()[i];
                m = static_cast<T>(beta1_ * m + (1.0 - beta1_) * g);
                v = static_cast<T>(beta2_ * v + (1.0 - beta2_) * g * g);
                const double mhat = static_cast<double>(m) / bc1;
                const double vhat = static_cast<double>(v) / bc2;
                e.value.data()[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

  private:
    struct Moments {
        Mat<T> m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace merc
