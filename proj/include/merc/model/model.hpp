#pragma once

// End-to-end model assembly: parameter creation and the full forward pass
// (cross-modal encoder -> BiGRU -> dialogue graph -> pooled classifier),
// honoring the ablation switches.

#include <map>
#include <string>
#include <vector>

#include "merc/dataset.hpp"
#include "merc/model/classifier.hpp"
#include "merc/model/context_gru.hpp"
#include "merc/model/encoder_cam.hpp"
#include "merc/model/graph_encoder.hpp"

namespace merc {

/// Dataset-dependent facts a trained model is bound to.
struct ModelBinding {
    LabelTaxonomy taxonomy;
    FeatureDims dims;
    std::vector<std::string> speakers;  // universe, sorted
    std::map<std::string, int> speaker_index;
    double alpha = 0.7;

    int n_speakers() const { return static_cast<int>(speakers.size()); }
    int speaker_of(const std::string& id) const {
        auto it = speaker_index.find(id);
        if (it == speaker_index.end()) throw DataError("speaker '" + id + "' not in the bound speaker universe");
        return it->second;
    }

    static ModelBinding from_dataset(const TrainConfig& cfg, const Dataset& ds) {
        ModelBinding b;
        b.taxonomy = ds.manifest.taxonomy;
        b.dims = ds.manifest.dims;
        b.speakers = speaker_universe(ds);
        for (size_t i = 0; i < b.speakers.size(); ++i) b.speaker_index[b.speakers[i]] = static_cast<int>(i);
        b.alpha = cfg.resolved_alpha(b.taxonomy);
        return b;
    }

    /// Rebinds a trained model against a new dataset: the speaker universe
    /// and alpha come from the run metadata, the label set must agree.
    static ModelBinding from_meta(const RunMeta& meta, const DatasetManifest& manifest) {
        if (manifest.taxonomy.fine_labels != meta.fine_labels)
            throw DataError("dataset label set does not match the checkpoint's taxonomy");
        ModelBinding b;
        b.taxonomy = manifest.taxonomy;
        b.dims = manifest.dims;
        b.speakers = meta.speakers;
        for (size_t i = 0; i < b.speakers.size(); ++i) b.speaker_index[b.speakers[i]] = static_cast<int>(i);
        b.alpha = meta.alpha;
        return b;
    }
};

/// Per-conversation tensors ready for a forward pass.
template <typename T>
struct PreparedConv {
    Mat<T> text, audio, visual;
    std::vector<int> fine_labels;
    std::vector<int> speaker_idx;
    int n() const { return static_cast<int>(fine_labels.size()); }
};

template <typename T>
PreparedConv<T> prepare_conversation(const Conversation& conv, const ModelBinding& b) {
    if (conv.utterances.empty()) throw DataError("conversation " + conv.id + " is empty");
    const int n = conv.size();
    PreparedConv<T> p;
    p.text = Mat<T>(n, b.dims.text);
    p.audio = Mat<T>(n, b.dims.audio);
    p.visual = Mat<T>(n, b.dims.visual);
    p.fine_labels.resize(n);
    p.speaker_idx.resize(n);
    for (int i = 0; i < n; ++i) {
        const Utterance& u = conv.utterances[i];
        if (static_cast<int>(u.text.size()) != b.dims.text || static_cast<int>(u.audio.size()) != b.dims.audio ||
            static_cast<int>(u.visual.size()) != b.dims.visual)
            throw DataError("conversation " + conv.id + ": feature widths do not match the bound dims");
        for (int c = 0; c < b.dims.text; ++c) p.text(i, c) = static_cast<T>(u.text[c]);
        for (int c = 0; c < b.dims.audio; ++c) p.audio(i, c) = static_cast<T>(u.audio[c]);
        for (int c = 0; c < b.dims.visual; ++c) p.visual(i, c) = static_cast<T>(u.visual[c]);
        p.fine_labels[i] = b.taxonomy.fine_index(u.label);
        p.speaker_idx[i] = b.speaker_of(u.speaker);
    }
    return p;
}

/// Creates every parameter the forward pass will bind under this config.
template <typename T>
ParamStore<T> init_params(const TrainConfig& cfg, const ModelBinding& b) {
    cfg.validate();
    ParamStore<T> ps;
    init_cam_params(ps, cfg, b.dims, cfg.seed);
    init_gru_params(ps, fused_width(cfg, b.dims), cfg.d_g, cfg.seed);
    if (!cfg.disable_graph) init_graph_params(ps, cfg, b.n_speakers(), cfg.seed);
    init_head_params(ps, cfg, b.taxonomy.n_fine(), cfg.seed);
    return ps;
}

template <typename T>
struct ModelOutput {
    Var<T> fine_probs;    // N x |fine|
    Var<T> context;       // N x 2 d_g
    DialogueGraph graph;  // topology with weights when the graph stage ran
};

/// Full forward pass over one conversation. In training mode DropMessage
/// draws from drop_rng; eval mode is deterministic.
template <typename T>
ModelOutput<T> forward_model(Tape<T>& t, ParamBinder<T>& P, const PreparedConv<T>& conv, const TrainConfig& cfg,
                             const ModelBinding& b, bool training, RngStream* drop_rng) {
    const int n = conv.n();
    if (n < 1) throw DataError("forward over an empty conversation");
    const ModalityFlags mods = ModalityFlags::from_config(cfg);
    Var<T> raw_t = mods.text ? t.input_ref(&conv.text) : t.input(Mat<T>(n, b.dims.text));
    Var<T> raw_a = mods.audio ? t.input_ref(&conv.audio) : t.input(Mat<T>(n, b.dims.audio));
    Var<T> raw_v = mods.visual ? t.input_ref(&conv.visual) : t.input(Mat<T>(n, b.dims.visual));

    Var<T> fused = encode_cam(t, P, raw_t, raw_a, raw_v, cfg, b.dims);
    Var<T> ctx = bigru_forward(t, P, fused, cfg.d_g);

    ModelOutput<T> out;
    out.context = ctx;
    Var<T> h2;
    if (cfg.disable_graph) {
        h2 = t.input(Mat<T>(n, cfg.d_h2));
    } else {
        out.graph = build_graph(n, cfg.window_p, cfg.window_f);
        assign_relations(out.graph, conv.speaker_idx, b.n_speakers());
        h2 = encode_graph(t, P, ctx, out.graph, cfg, b.n_speakers(), training, drop_rng);
    }
    Var<T> pooled = fuse_and_pool(t, P, ctx, h2);
    out.fine_probs = classify_probs(t, P, pooled, cfg.mlp_hidden, b.taxonomy.n_fine());
    return out;
}

}  // namespace merc
