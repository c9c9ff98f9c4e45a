#pragma once

#include <cstdint>
#include <string>

#include "merc/dataset.hpp"

namespace merc {

/// Full run configuration: optimizer settings, model widths, dialogue-graph
/// window, ablation switches. Loaded from a JSON file whose keys match the
/// field names; the "preset" key ("desk" or "paper") selects width/epoch
/// defaults which explicit keys then override.
struct TrainConfig {
    std::string preset = "desk";

    // optimization
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.005;
    double alpha = -1;  // < 0 means: resolve from the taxonomy (0.7 iemocap6, 0.5 meld7)
    double lambda = 1e-5;
    double drop_rate = 0.1;
    bool drop_rescale = true;
    uint64_t seed = 1;

    // dialogue-graph window
    int window_p = 10;
    int window_f = 10;

    // model widths
    int d_model = 16;
    int h = 2;
    int T = 1;  // stacked co-attention blocks
    int d_g = 12;
    int d_h1 = 32;
    int d_h2 = 32;
    int mlp_hidden = 32;
    double ln_eps = 1e-5;
    std::string relation_norm = "learned";  // "learned" or "neighborhood"

    // ablations
    bool disable_cam = false;
    bool disable_graph = false;
    std::string modalities = "TAV";  // any nonempty subset of T, A, V

    std::string float_mode = "f64";  // "f64" or "f32"
    int threads = 1;

    int d_h() const { return d_model / h; }
    int d_ff() const { return 4 * d_model; }
    bool has_modality(char m) const { return modalities.find(m) != std::string::npos; }

    double resolved_alpha(const LabelTaxonomy& tax) const;
    void validate() const;

    static TrainConfig from_json_text(const std::string& text, const std::string& origin);
    static TrainConfig load(const std::string& path);
    std::string to_json_text() const;
    void save(const std::string& path) const;
};

SynthConfig synth_config_from_json_text(const std::string& text, const std::string& origin);
SynthConfig load_synth_config(const std::string& path);

/// Facts a checkpoint needs beyond the parameter values: the training
/// config, the speaker universe the relation typing was built over, the
/// label set, and the resolved coarse-loss weight. Written next to the
/// checkpoint as "<ckpt>.meta.json".
struct RunMeta {
    TrainConfig cfg;
    std::vector<std::string> speakers;
    std::vector<std::string> fine_labels;
    double alpha = 0.7;

    std::string to_json_text() const;
    void save(const std::string& path) const;
    static RunMeta from_json_text(const std::string& text, const std::string& origin);
    static RunMeta load(const std::string& path);
};

inline std::string meta_path_for(const std::string& ckpt_path) { return ckpt_path + ".meta.json"; }

}  // namespace merc
