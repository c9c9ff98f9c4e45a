#pragma once

// Speaker-aware dialogue-graph encoding: attention edge weights over the
// windowed topology, training-time message dropout, a relation-typed first
// convolution and a relation-agnostic second one. The two aggregation ops are
// fused (edge-sparse forward with a hand-derived backward) so cost stays
// proportional to the edge count rather than N^2.

#include <memory>
#include <string>
#include <vector>

#include "merc/config.hpp"
#include "merc/graph.hpp"
#include "merc/model/binder.hpp"

namespace merc {

// Lower clamp for the learnable per-relation normalizers c_r.
inline constexpr double kRelationNormFloor = 1e-3;

template <typename T>
struct EdgeWeightVars {
    std::vector<Var<T>> per_node;  // softmax row per destination node
    Var<T> edges;                  // 1 x E, destination-major
};

/// Attention edge weights: score of in-window neighbor j for node i is
/// (g_i We) . g_j; softmax is taken over the surviving (boundary-truncated)
/// neighbor set of each node, self-loop included. Incoming weights of every
/// node therefore sum to 1. Numeric weights are also written into the graph.
template <typename T>
EdgeWeightVars<T> compute_edge_weights(Tape<T>& t, DialogueGraph& g, Var<T> ctx, Var<T> we) {
    const Mat<T>& G = t.val(ctx);
    if (G.rows() != g.n_nodes)
        throw ShapeError("edge weights: " + std::to_string(g.n_nodes) + " nodes vs features " + G.shape_str());
    if (t.val(we).rows() != G.cols() || t.val(we).cols() != G.cols())
        throw ShapeError("edge weights: We is " + t.val(we).shape_str() + " for feature width " +
                         std::to_string(G.cols()));
    Var<T> q = t.matmul(ctx, we);
    EdgeWeightVars<T> out;
    out.per_node.reserve(g.n_nodes);
    for (int i = 0; i < g.n_nodes; ++i) {
        std::vector<int> srcs;
        srcs.reserve(g.in_degree(i));
        for (int e = g.span_begin[i]; e < g.span_end[i]; ++e) srcs.push_back(g.edges[e].src);
        Var<T> scores = t.matmul(t.row_select(q, i), t.transpose(t.gather_rows(ctx, std::move(srcs))));
        out.per_node.push_back(t.softmax_rows(scores));
    }
    out.edges = t.concat_cols(out.per_node);
    const Mat<T>& ev = t.val(out.edges);
    for (int e = 0; e < g.n_edges(); ++e) g.edges[e].weight = static_cast<double>(ev(0, e));
    g.weights_set = true;
    return out;
}

template <typename T>
struct DropResult {
    Var<T> features;                  // node-masked context features
    std::vector<double> edge_factors; // per-edge multiplier (0 or rescale)
    DropMask mask;
};

/// Message dropout. Whole node messages and individual edges are dropped by
/// independent Bernoulli masks; survivors are rescaled by 1/(1-rate) when
/// rescaling is on, which keeps the aggregation an unbiased estimate of the
/// undropped one. Eval mode is the identity.
template <typename T>
DropResult<T> drop_message(Tape<T>& t, Var<T> ctx, const DialogueGraph& g, double rate, bool rescale,
                           RngStream* rng, bool training) {
    DropResult<T> out;
    if (training) {
        if (!rng) throw StateError("drop_message: training mode needs an rng stream");
        out.mask = DropMask::draw(g.n_nodes, g.n_edges(), rate, rescale, *rng, true);
    } else {
        out.mask = DropMask::all_keep(g.n_nodes, g.n_edges());
    }
    std::vector<T> nf(g.n_nodes);
    bool identity = true;
    for (int i = 0; i < g.n_nodes; ++i) {
        nf[i] = static_cast<T>(out.mask.node_factor(i));
        identity = identity && nf[i] == T(1);
    }
    out.features = identity ? ctx : t.row_scale_const(ctx, std::move(nf));
    out.edge_factors.resize(g.n_edges());
    for (int e = 0; e < g.n_edges(); ++e) out.edge_factors[e] = out.mask.edge_factor(e);
    return out;
}

/// Relation-typed aggregation (first layer), pre-activation:
///   pre_i = sum over in-edges e=(j->i), j != i, of
///             (alpha_e * edge_factor_e / c_{r_e}) * (gm_j W_{r_e})
///         + alpha_self(i) * (gm_i W0)
/// The self contribution rides its own transform and is not edge-dropped.
/// c is either the clamped learnable per-relation scalar (c_rel nonempty) or
/// the fixed per-(node, relation) in-neighborhood size.
template <typename T>
Var<T> rgcn_aggregate(Tape<T>& t, const DialogueGraph& g, Var<T> gm, Var<T> alpha_edges,
                      std::vector<double> edge_factors, const std::vector<Var<T>>& w_rel, Var<T> w0,
                      const std::vector<Var<T>>& c_rel) {
    if (!g.relations_set) throw StateError("rgcn_aggregate: relations not assigned");
    if (!g.weights_set) throw StateError("rgcn_aggregate: edge weights not computed");
    const int n = g.n_nodes, n_edges = g.n_edges(), n_rel = static_cast<int>(w_rel.size());
    const Mat<T>& gmv = t.val(gm);
    const Mat<T>& av = t.val(alpha_edges);
    if (av.rows() != 1 || av.cols() != n_edges)
        throw ShapeError("rgcn_aggregate: alpha is " + av.shape_str() + " for " + std::to_string(n_edges) +
                         " edges");
    if (static_cast<int>(edge_factors.size()) != n_edges) throw ShapeError("rgcn_aggregate: edge factor count");
    const int d_in = gmv.cols();
    const int d_out = t.val(w_rel.empty() ? w0 : w_rel[0]).cols();
    const bool learned_norm = !c_rel.empty();
    if (learned_norm && static_cast<int>(c_rel.size()) != n_rel)
        throw ShapeError("rgcn_aggregate: one normalizer per relation expected");

    // per-edge divisor
    std::vector<double> c_edge(n_edges, 1.0);
    if (learned_norm) {
        for (int e = 0; e < n_edges; ++e) c_edge[e] = static_cast<double>(t.val(c_rel[g.edges[e].relation])(0, 0));
    } else {
        std::vector<int> count(static_cast<size_t>(n) * n_rel, 0);
        for (int e = 0; e < n_edges; ++e)
            if (g.edges[e].src != g.edges[e].dst)
                count[static_cast<size_t>(g.edges[e].dst) * n_rel + g.edges[e].relation]++;
        for (int e = 0; e < n_edges; ++e) {
            const int cnt = count[static_cast<size_t>(g.edges[e].dst) * n_rel + g.edges[e].relation];
            c_edge[e] = cnt > 0 ? cnt : 1;
        }
    }

    // cached projections, reused by the backward pass
    auto proj = std::make_shared<std::vector<Mat<T>>>();
    proj->reserve(n_rel + 1);
    for (int r = 0; r < n_rel; ++r) proj->push_back(kernels::matmul_nn(gmv, t.val(w_rel[r])));
    proj->push_back(kernels::matmul_nn(gmv, t.val(w0)));  // last slot: gm W0

    Mat<T> pre(n, d_out);
    for (int i = 0; i < n; ++i) {
        T* out_row = pre.row(i);
        for (int e = g.span_begin[i]; e < g.span_end[i]; ++e) {
            const auto& edge = g.edges[e];
            if (edge.src == i) {
                const T a = av(0, e);
                const T* m = (*proj)[n_rel].row(i);
                for (int c = 0; c < d_out; ++c) out_row[c] += a * m[c];
            } else {
                const T k = av(0, e) * static_cast<T>(edge_factors[e] / c_edge[e]);
                const T* m = (*proj)[edge.relation].row(edge.src);
                for (int c = 0; c < d_out; ++c) out_row[c] += k * m[c];
            }
        }
    }

    struct Topo {
        std::vector<GraphEdge> edges;
        std::vector<int> span_begin, span_end;
    };
    auto topo = std::make_shared<Topo>(Topo{g.edges, g.span_begin, g.span_end});

    return t.push(std::move(pre), [gm, alpha_edges, w_rel, w0, c_rel, topo, proj,
                                   efac = std::move(edge_factors), c_edge = std::move(c_edge), n, n_rel, d_in,
                                   d_out, learned_norm, self = static_cast<int>(t.size())](Tape<T>& t) {
        const Mat<T>& up = t.grad(Var<T>{self});
        Mat<T>& g_alpha = t.grad(alpha_edges);
        std::vector<Mat<T>> scatter(n_rel + 1, Mat<T>(n, d_out));
        std::vector<T> g_c(n_rel, T(0));
        for (int i = 0; i < n; ++i) {
            const T* u = up.row(i);
            for (int e = topo->span_begin[i]; e < topo->span_end[i]; ++e) {
                const auto& edge = topo->edges[e];
                if (edge.src == i) {
                    const T a = t.val(alpha_edges)(0, e);
                    const T* m = (*proj)[n_rel].row(i);
                    T dot = T(0);
                    for (int c = 0; c < d_out; ++c) dot += m[c] * u[c];
                    g_alpha(0, e) += dot;
                    T* s = scatter[n_rel].row(i);
                    for (int c = 0; c < d_out; ++c) s[c] += a * u[c];
                } else {
                    const T a = t.val(alpha_edges)(0, e);
                    const T w = static_cast<T>(efac[e] / c_edge[e]);
                    const T* m = (*proj)[edge.relation].row(edge.src);
                    T dot = T(0);
                    for (int c = 0; c < d_out; ++c) dot += m[c] * u[c];
                    g_alpha(0, e) += w * dot;
                    T* s = scatter[edge.relation].row(edge.src);
                    const T k = a * w;
                    for (int c = 0; c < d_out; ++c) s[c] += k * u[c];
                    if (learned_norm) g_c[edge.relation] += -(k / static_cast<T>(c_edge[e])) * dot;
                }
            }
        }
        for (int r = 0; r < n_rel; ++r) {
            kernels::matmul_nt_acc(scatter[r], t.val(w_rel[r]), t.grad(gm));
            kernels::matmul_tn_acc(t.val(gm), scatter[r], t.grad(w_rel[r]));
            if (learned_norm) t.grad(c_rel[r])(0, 0) += g_c[r];
        }
        kernels::matmul_nt_acc(scatter[n_rel], t.val(w0), t.grad(gm));
        kernels::matmul_tn_acc(t.val(gm), scatter[n_rel], t.grad(w0));
    });
}

/// Relation-agnostic aggregation (second layer), pre-activation:
///   pre_i = (sum_{j in N_i} h_j) W2 + h_i W02
/// N_i is the full windowed in-neighborhood, self-loop included, unweighted.
template <typename T>
Var<T> gcn_aggregate(Tape<T>& t, const DialogueGraph& g, Var<T> h1, Var<T> w2, Var<T> w02) {
    const Mat<T>& H = t.val(h1);
    if (H.rows() != g.n_nodes) throw ShapeError("gcn_aggregate: features " + H.shape_str());
    const Mat<T>&W2 = t.val(w2), &W02 = t.val(w02);
    if (W2.rows() != H.cols() || !W2.same_shape(W02))
        throw ShapeError("gcn_aggregate: weights " + W2.shape_str() + " / " + W02.shape_str() +
                         " for features " + H.shape_str());
    auto nsum = std::make_shared<Mat<T>>(g.n_nodes, H.cols());
    for (const auto& e : g.edges) {
        const T* src = H.row(e.src);
        T* dst = nsum->row(e.dst);
        for (int c = 0; c < H.cols(); ++c) dst[c] += src[c];
    }
    Mat<T> pre = kernels::matmul_nn(*nsum, W2);
    kernels::matmul_nn(H, W02, &pre, true);
    auto edges = std::make_shared<std::vector<GraphEdge>>(g.edges);
    return t.push(std::move(pre), [h1, w2, w02, nsum, edges, self = static_cast<int>(t.size())](Tape<T>& t) {
        const Mat<T>& up = t.grad(Var<T>{self});
        Mat<T> dsum(nsum->rows(), nsum->cols());
        kernels::matmul_nt_acc(up, t.val(w2), dsum);
        Mat<T>& gh = t.grad(h1);
        for (const auto& e : *edges) {
            const T* s = dsum.row(e.dst);
            T* d = gh.row(e.src);
            for (int c = 0; c < dsum.cols(); ++c) d[c] += s[c];
        }
        kernels::matmul_nt_acc(up, t.val(w02), gh);
        kernels::matmul_tn_acc(*nsum, up, t.grad(w2));
        kernels::matmul_tn_acc(t.val(h1), up, t.grad(w02));
    });
}

/// Full graph stage: weights, dropout, both convolutions with ReLU.
template <typename T>
Var<T> encode_graph(Tape<T>& t, ParamBinder<T>& P, Var<T> ctx, DialogueGraph& graph, const TrainConfig& cfg,
                    int n_speakers, bool training, RngStream* drop_rng) {
    const int d = t.val(ctx).cols();
    auto ew = compute_edge_weights(t, graph, ctx, P("graph.We", d, d));
    auto dropped = drop_message(t, ctx, graph, cfg.drop_rate, cfg.drop_rescale, drop_rng, training);
    const int n_rel = RelationTyping{n_speakers}.count();
    std::vector<Var<T>> w_rel, c_rel;
    w_rel.reserve(n_rel);
    for (int r = 0; r < n_rel; ++r) {
        const std::string rp = "graph.rel" + std::to_string(r);
        w_rel.push_back(P(rp + ".W1", d, cfg.d_h1));
        if (cfg.relation_norm == "learned")
            c_rel.push_back(t.clamp_min(P(rp + ".s", 1, 1), static_cast<T>(kRelationNormFloor)));
    }
    Var<T> h1 = t.relu(rgcn_aggregate(t, graph, dropped.features, ew.edges, std::move(dropped.edge_factors),
                                      w_rel, P("graph.W01", d, cfg.d_h1), c_rel));
    return t.relu(gcn_aggregate(t, graph, h1, P("graph.W2", cfg.d_h1, cfg.d_h2), P("graph.W02", cfg.d_h1, cfg.d_h2)));
}

template <typename T>
void init_graph_params(ParamStore<T>& ps, const TrainConfig& cfg, int n_speakers, uint64_t seed) {
    const int d = 2 * cfg.d_g;
    init_glorot(ps, "graph.We", d, d, seed, 0.25);
    const int n_rel = RelationTyping{n_speakers}.count();
    for (int r = 0; r < n_rel; ++r) {
        const std::string rp = "graph.rel" + std::to_string(r);
        init_glorot(ps, rp + ".W1", d, cfg.d_h1, seed);
        if (cfg.relation_norm == "learned") init_const(ps, rp + ".s", 1, 1, 1.0);
    }
    init_glorot(ps, "graph.W01", d, cfg.d_h1, seed);
    init_glorot(ps, "graph.W2", cfg.d_h1, cfg.d_h2, seed, 0.25);
    init_glorot(ps, "graph.W02", cfg.d_h1, cfg.d_h2, seed);
}

}  // namespace merc
