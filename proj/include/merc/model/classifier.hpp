#pragma once

// Emotion classification head: concatenate context and speaker encodings,
// attention-pool over the conversation, decode with a small MLP, and form
// the mixed coarse/fine cross-entropy objective.

#include <string>
#include <vector>

#include "merc/config.hpp"
#include "merc/model/binder.hpp"
#include "merc/taxonomy.hpp"

namespace merc {

/// h_i = [g_i, h2_i]; beta = softmax over scores (h_i Wb) . h_j; row i of
/// the result is the beta_i-weighted sum of all h_j.
template <typename T>
Var<T> fuse_and_pool(Tape<T>& t, ParamBinder<T>& P, Var<T> ctx, Var<T> h2) {
    if (t.val(ctx).rows() != t.val(h2).rows())
        throw ShapeError("fuse_and_pool: " + t.val(ctx).shape_str() + " vs " + t.val(h2).shape_str());
    Var<T> h = t.concat_cols({ctx, h2});
    const int d = t.val(h).cols();
    Var<T> beta = t.softmax_rows(t.matmul(t.matmul(h, P("head.Wbeta", d, d)), t.transpose(h)));
    return t.matmul(beta, h);
}

/// MLP decoder producing fine-class probability rows.
template <typename T>
Var<T> classify_probs(Tape<T>& t, ParamBinder<T>& P, Var<T> pooled, int mlp_hidden, int n_fine) {
    const int d = t.val(pooled).cols();
    Var<T> l = t.relu(t.add_bias(t.matmul(pooled, P("head.Wl", d, mlp_hidden)), P("head.bl", 1, mlp_hidden)));
    return t.softmax_rows(t.add_bias(t.matmul(l, P("head.Wsmax", mlp_hidden, n_fine)), P("head.bsmax", 1, n_fine)));
}

/// Argmax per row; ties resolve to the lowest class index.
template <typename T>
std::vector<int> argmax_rows(const Mat<T>& p) {
    std::vector<int> out(p.rows());
    for (int r = 0; r < p.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < p.cols(); ++c)
            if (p(r, c) > p(r, best)) best = c;
        out[r] = best;
    }
    return out;
}

/// 0/1 matrix summing fine probabilities into their coarse groups.
template <typename T>
Mat<T> coarse_group_matrix(const LabelTaxonomy& tax) {
    Mat<T> m(tax.n_fine(), tax.n_coarse());
    for (int k = 0; k < tax.n_fine(); ++k) m(k, tax.coarse_index_of_fine(k)) = T(1);
    return m;
}

/// Coarse probabilities as the group sums of fine probabilities; rows keep
/// summing to 1 because the grouping is a partition.
template <typename T>
Var<T> coarse_probs(Tape<T>& t, Var<T> fine_probs, const LabelTaxonomy& tax) {
    if (t.val(fine_probs).cols() != tax.n_fine())
        throw ShapeError("coarse_probs: " + t.val(fine_probs).shape_str() + " for " +
                         std::to_string(tax.n_fine()) + " fine labels");
    return t.matmul_const(fine_probs, coarse_group_matrix<T>(tax));
}

/// Unnormalized mixed cross-entropy sum over the rows of fine_probs:
///   sum_i [ alpha * (-log Pc[i, yc_i]) + (1 - alpha) * (-log Pf[i, yf_i]) ]
/// The caller normalizes (mean over the batch's utterances) via the backward
/// seed, so conversations can be taped independently.
template <typename T>
Var<T> mixed_ce_sum(Tape<T>& t, Var<T> fine_probs, const std::vector<int>& fine_labels,
                    const LabelTaxonomy& tax, double alpha) {
    std::vector<int> coarse_labels(fine_labels.size());
    for (size_t i = 0; i < fine_labels.size(); ++i) coarse_labels[i] = tax.coarse_index_of_fine(fine_labels[i]);
    Var<T> ce_f = t.cross_entropy_rows(fine_probs, fine_labels);
    Var<T> ce_c = t.cross_entropy_rows(coarse_probs(t, fine_probs, tax), coarse_labels);
    return t.add(t.scale(ce_c, static_cast<T>(alpha)), t.scale(ce_f, static_cast<T>(1.0 - alpha)));
}

/// The full objective for a single probability matrix:
///   alpha * Lc + (1 - alpha) * Lf + lambda * ||theta||^2
/// with Lc/Lf means over rows. When binder/store are given the theta-norm is
/// taken over every parameter in the store, on the tape, so its gradient is
/// part of the same backward pass.
template <typename T>
Var<T> multitask_loss(Tape<T>& t, Var<T> fine_probs, const std::vector<int>& fine_labels,
                      const LabelTaxonomy& tax, double alpha, double lambda,
                      ParamBinder<T>* binder = nullptr) {
    if (alpha < 0 || alpha > 1) throw ConfigError("alpha must be in [0,1]");
    const int n = t.val(fine_probs).rows();
    Var<T> loss = t.scale(mixed_ce_sum(t, fine_probs, fine_labels, tax, alpha), static_cast<T>(1.0 / n));
    if (lambda > 0 && binder) {
        Var<T> reg;
        bool first = true;
        for (auto& [name, entry] : binder->store()) {
            Var<T> term = t.l2_sq_norm((*binder)(name));
            reg = first ? term : t.add(reg, term);
            first = false;
        }
        if (!first) loss = t.add(loss, t.scale(reg, static_cast<T>(lambda)));
    }
    return loss;
}

template <typename T>
void init_head_params(ParamStore<T>& ps, const TrainConfig& cfg, int n_fine, uint64_t seed) {
    const int d = 2 * cfg.d_g + cfg.d_h2;
    init_glorot(ps, "head.Wbeta", d, d, seed, 0.25);
    init_glorot(ps, "head.Wl", d, cfg.mlp_hidden, seed);
    init_const(ps, "head.bl", 1, cfg.mlp_hidden, 0.0);
    init_glorot(ps, "head.Wsmax", cfg.mlp_hidden, n_fine, seed);
    init_const(ps, "head.bsmax", 1, n_fine, 0.0);
}

}  // namespace merc
