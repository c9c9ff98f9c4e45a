#pragma once

// Cross-modal alignment: pairwise co-attention transformers over the three
// modality streams, then fusion of the six enhanced representations with the
// raw features. Attention works over utterance rows; there is no positional
// encoding (utterance order is handled downstream by the recurrent encoder).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "merc/config.hpp"
#include "merc/model/binder.hpp"

namespace merc {

/// Multi-head cross attention: xq supplies queries, xkv keys and values.
/// Per head i: softmax(Q_i K_i^T / sqrt(d_h)) V_i; heads concatenated, then
/// projected by Wo.
template <typename T>
Var<T> cross_attention(Tape<T>& t, ParamBinder<T>& P, const std::string& prefix, Var<T> xq, Var<T> xkv,
                       int h, int d_h) {
    const int d_model = h * d_h;
    if (t.val(xq).cols() != d_model || t.val(xkv).cols() != d_model)
        throw ShapeError("cross_attention: streams must be Nx" + std::to_string(d_model) + ", got " +
                         t.val(xq).shape_str() + " and " + t.val(xkv).shape_str());
    const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_h)));
    std::vector<Var<T>> heads;
    heads.reserve(h);
    for (int i = 0; i < h; ++i) {
        const std::string hp = prefix + ".h" + std::to_string(i);
        Var<T> q = t.matmul(xq, P(hp + ".Wq", d_model, d_h));
        Var<T> k = t.matmul(xkv, P(hp + ".Wk", d_model, d_h));
        Var<T> v = t.matmul(xkv, P(hp + ".Wv", d_model, d_h));
        Var<T> att = t.softmax_rows(t.scale(t.matmul(q, t.transpose(k)), inv_sqrt_dh));
        heads.push_back(t.matmul(att, v));
    }
    return t.matmul(t.concat_cols(heads), P(prefix + ".Wo", h * d_h, d_model));
}

/// One co-attention transformer block side: post-norm residual around the
/// cross attention, then a two-layer feedforward with ReLU on both layers.
template <typename T>
Var<T> ct_block(Tape<T>& t, ParamBinder<T>& P, const std::string& prefix, Var<T> xq, Var<T> xkv,
                const TrainConfig& cfg) {
    const int d_model = cfg.d_model, d_ff = cfg.d_ff();
    const T eps = static_cast<T>(cfg.ln_eps);
    Var<T> att = cross_attention(t, P, prefix, xq, xkv, cfg.h, cfg.d_h());
    Var<T> y1 = t.layer_norm(t.add(xq, att), P(prefix + ".ln1.gain", 1, d_model),
                             P(prefix + ".ln1.bias", 1, d_model), eps);
    Var<T> ffn = t.relu(t.add_bias(
        t.matmul(t.relu(t.add_bias(t.matmul(y1, P(prefix + ".ffn.W1", d_model, d_ff)),
                                   P(prefix + ".ffn.b1", 1, d_ff))),
                 P(prefix + ".ffn.W2", d_ff, d_model)),
        P(prefix + ".ffn.b2", 1, d_model)));
    return t.layer_norm(t.add(y1, ffn), P(prefix + ".ln2.gain", 1, d_model),
                        P(prefix + ".ln2.bias", 1, d_model), eps);
}

/// T stacked block pairs; block t consumes block t-1's outputs on both
/// sides. Returns (a enhanced by b, b enhanced by a).
template <typename T>
std::pair<Var<T>, Var<T>> co_attention_transformer(Tape<T>& t, ParamBinder<T>& P, const std::string& pair_name,
                                                   Var<T> a, Var<T> b, const TrainConfig& cfg) {
    if (cfg.T < 1) throw ConfigError("co-attention transformer needs at least one block");
    for (int blk = 0; blk < cfg.T; ++blk) {
        const std::string bp = "cam.ct." + pair_name + ".b" + std::to_string(blk);
        Var<T> a_next = ct_block(t, P, bp + ".l", a, b, cfg);
        Var<T> b_next = ct_block(t, P, bp + ".r", b, a, cfg);
        a = a_next;
        b = b_next;
    }
    return {a, b};
}

/// Affine projection of one raw modality into the model width.
template <typename T>
Var<T> project_modality(Tape<T>& t, ParamBinder<T>& P, const std::string& mod, Var<T> raw, int dim_in,
                        int d_model) {
    if (t.val(raw).cols() != dim_in)
        throw ShapeError("projection " + mod + ": input is " + t.val(raw).shape_str() + ", expected cols " +
                         std::to_string(dim_in));
    return t.add_bias(t.matmul(raw, P("cam.proj." + mod + ".W", dim_in, d_model)),
                      P("cam.proj." + mod + ".b", 1, d_model));
}

struct ModalityFlags {
    bool text = true, audio = true, visual = true;
    static ModalityFlags from_config(const TrainConfig& cfg) {
        return {cfg.has_modality('T'), cfg.has_modality('A'), cfg.has_modality('V')};
    }
};

/// Fused feature width produced by encode_cam under the given config.
inline int fused_width(const TrainConfig& cfg, const FeatureDims& dims) {
    if (cfg.disable_cam) return 3 * cfg.d_model;
    return 6 * cfg.d_model + dims.text + dims.audio + dims.visual;
}

/// Full cross-modal encoder. Raw inputs arrive per modality; excluded
/// modalities contribute zero blocks of the same width so the fused layout
/// [E_ta, E_at, E_va, E_av, E_tv, E_vt, U_t, U_a, U_v] never changes shape.
/// With the encoder disabled, the fused feature is just the concatenation of
/// the three projected streams.
template <typename T>
Var<T> encode_cam(Tape<T>& t, ParamBinder<T>& P, Var<T> raw_text, Var<T> raw_audio, Var<T> raw_visual,
                  const TrainConfig& cfg, const FeatureDims& dims) {
    const ModalityFlags mods = ModalityFlags::from_config(cfg);
    const int n = t.val(mods.text ? raw_text : (mods.audio ? raw_audio : raw_visual)).rows();
    auto zeros = [&](int cols) { return t.input(Mat<T>(n, cols)); };

    Var<T> proj_t = mods.text ? project_modality(t, P, "text", raw_text, dims.text, cfg.d_model)
                              : zeros(cfg.d_model);
    Var<T> proj_a = mods.audio ? project_modality(t, P, "audio", raw_audio, dims.audio, cfg.d_model)
                               : zeros(cfg.d_model);
    Var<T> proj_v = mods.visual ? project_modality(t, P, "visual", raw_visual, dims.visual, cfg.d_model)
                                : zeros(cfg.d_model);

    if (cfg.disable_cam) return t.concat_cols({proj_t, proj_a, proj_v});

    Var<T> e_ta = zeros(cfg.d_model), e_at = zeros(cfg.d_model);
    Var<T> e_av = zeros(cfg.d_model), e_va = zeros(cfg.d_model);
    Var<T> e_tv = zeros(cfg.d_model), e_vt = zeros(cfg.d_model);
    if (mods.text && mods.audio) std::tie(e_ta, e_at) = co_attention_transformer(t, P, "ta", proj_t, proj_a, cfg);
    if (mods.audio && mods.visual) std::tie(e_av, e_va) = co_attention_transformer(t, P, "av", proj_a, proj_v, cfg);
    if (mods.text && mods.visual) std::tie(e_tv, e_vt) = co_attention_transformer(t, P, "tv", proj_t, proj_v, cfg);

    Var<T> u_t = mods.text ? raw_text : zeros(dims.text);
    Var<T> u_a = mods.audio ? raw_audio : zeros(dims.audio);
    Var<T> u_v = mods.visual ? raw_visual : zeros(dims.visual);
    return t.concat_cols({e_ta, e_at, e_va, e_av, e_tv, e_vt, u_t, u_a, u_v});
}

/// Parameter creation mirroring exactly what encode_cam binds.
template <typename T>
void init_cam_params(ParamStore<T>& ps, const TrainConfig& cfg, const FeatureDims& dims, uint64_t seed) {
    const ModalityFlags mods = ModalityFlags::from_config(cfg);
    const int d_model = cfg.d_model, d_ff = cfg.d_ff(), d_h = cfg.d_h();
    auto proj = [&](const char* mod, int dim_in) {
        init_glorot(ps, std::string("cam.proj.") + mod + ".W", dim_in, d_model, seed);
        init_const(ps, std::string("cam.proj.") + mod + ".b", 1, d_model, 0.0);
    };
    if (mods.text) proj("text", dims.text);
    if (mods.audio) proj("audio", dims.audio);
    if (mods.visual) proj("visual", dims.visual);
    if (cfg.disable_cam) return;

    auto ct_side = [&](const std::string& prefix) {
        for (int i = 0; i < cfg.h; ++i) {
            const std::string hp = prefix + ".h" + std::to_string(i);
            init_glorot(ps, hp + ".Wq", d_model, d_h, seed);
            init_glorot(ps, hp + ".Wk", d_model, d_h, seed);
            init_glorot(ps, hp + ".Wv", d_model, d_h, seed);
        }
        init_glorot(ps, prefix + ".Wo", cfg.h * d_h, d_model, seed, 0.5);
        init_glorot(ps, prefix + ".ffn.W1", d_model, d_ff, seed);
        init_const(ps, prefix + ".ffn.b1", 1, d_ff, 0.0);
        init_glorot(ps, prefix + ".ffn.W2", d_ff, d_model, seed, 0.5);
        init_const(ps, prefix + ".ffn.b2", 1, d_model, 0.0);
        init_const(ps, prefix + ".ln1.gain", 1, d_model, 1.0);
        init_const(ps, prefix + ".ln1.bias", 1, d_model, 0.0);
        init_const(ps, prefix + ".ln2.gain", 1, d_model, 1.0);
        init_const(ps, prefix + ".ln2.bias", 1, d_model, 0.0);
    };
    auto ct_pair = [&](const std::string& pair_name, bool active) {
        if (!active) return;
        for (int blk = 0; blk < cfg.T; ++blk) {
            const std::string bp = "cam.ct." + pair_name + ".b" + std::to_string(blk);
            ct_side(bp + ".l");
            ct_side(bp + ".r");
        }
    };
    ct_pair("ta", mods.text && mods.audio);
    ct_pair("av", mods.audio && mods.visual);
    ct_pair("tv", mods.text && mods.visual);
}

}  // namespace merc
