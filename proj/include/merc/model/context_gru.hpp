#pragma once

// Sequential context fusion: a bidirectional GRU over the fused per-utterance
// features. Standard update/reset/candidate gating, zero initial state, fully
// differentiable through time.

#include <string>
#include <vector>

#include "merc/model/binder.hpp"

namespace merc {

/// One GRU step. x is 1 x d_in, h_prev is 1 x d_g.
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + (r . h) Un + bn)
///   h' = (1 - z) . h + z . n
template <typename T>
Var<T> gru_cell(Tape<T>& t, ParamBinder<T>& P, const std::string& prefix, Var<T> x, Var<T> h_prev) {
    Var<T> z = t.sigmoid(t.add_bias(t.add(t.matmul(x, P(prefix + ".Wz")), t.matmul(h_prev, P(prefix + ".Uz"))),
                                    P(prefix + ".bz")));
    Var<T> r = t.sigmoid(t.add_bias(t.add(t.matmul(x, P(prefix + ".Wr")), t.matmul(h_prev, P(prefix + ".Ur"))),
                                    P(prefix + ".br")));
    Var<T> n = t.tanh_(t.add_bias(
        t.add(t.matmul(x, P(prefix + ".Wn")), t.matmul(t.mul(r, h_prev), P(prefix + ".Un"))), P(prefix + ".bn")));
    return t.add(t.mul(t.affine(z, T(-1), T(1)), h_prev), t.mul(z, n));
}

/// Bidirectional pass over the N rows of F; row i of the result is
/// [forward_state_i, backward_state_i], width 2*d_g.
template <typename T>
Var<T> bigru_forward(Tape<T>& t, ParamBinder<T>& P, Var<T> F, int d_g) {
    const int n = t.val(F).rows();
    if (n < 1) throw DataError("bigru over an empty conversation");
    std::vector<Var<T>> fwd(n), bwd(n);
    Var<T> h = t.input(Mat<T>(1, d_g));
    for (int i = 0; i < n; ++i) {
        h = gru_cell(t, P, "gru.fwd", t.row_select(F, i), h);
        fwd[i] = h;
    }
    h = t.input(Mat<T>(1, d_g));
    for (int i = n - 1; i >= 0; --i) {
        h = gru_cell(t, P, "gru.bwd", t.row_select(F, i), h);
        bwd[i] = h;
    }
    return t.concat_cols({t.concat_rows(fwd), t.concat_rows(bwd)});
}

template <typename T>
void init_gru_params(ParamStore<T>& ps, int d_in, int d_g, uint64_t seed) {
    for (const char* dir : {"fwd", "bwd"}) {
        for (const char* gate : {"z", "r", "n"}) {
            const std::string g(gate);
            init_glorot(ps, "gru." + std::string(dir) + ".W" + g, d_in, d_g, seed);
            init_glorot(ps, "gru." + std::string(dir) + ".U" + g, d_g, d_g, seed);
            init_const(ps, "gru." + std::string(dir) + ".b" + g, 1, d_g, 0.0);
        }
    }
}

}  // namespace merc
