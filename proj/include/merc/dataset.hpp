#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "merc/taxonomy.hpp"

namespace merc {

struct FeatureDims {
    int text = 200;
    int audio = 100;
    int visual = 100;
};

struct Utterance {
    std::string speaker;
    std::string label;  // fine label
    std::vector<double> text;
    std::vector<double> audio;
    std::vector<double> visual;
};

struct Conversation {
    std::string id;
    std::vector<Utterance> utterances;
    int size() const { return static_cast<int>(utterances.size()); }
};

struct DatasetManifest {
    int format_version = 1;
    LabelTaxonomy taxonomy;
    FeatureDims dims;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Conversation> conversations;
    int size() const { return static_cast<int>(conversations.size()); }
    long total_utterances() const {
        long n = 0;
        for (const auto& c : conversations) n += c.size();
        return n;
    }
};

struct SynthConfig {
    int n_conversations = 250;
    int len_lo = 8, len_hi = 16;
    int n_speakers = 2;
    double separation = 3.0;
    double cross_modal_coupling = 0.5;
    double speaker_inertia = 0.9;
    double noise_sigma = 0.5;
    // Magnitude of the shared cross-modal latent, relative to separation.
    // Large enough that a coupled utterance is ambiguous from any single
    // modality, which is what makes the modality and module ablations
    // measurable on synthetic data.
    double latent_scale = 6.0;
    uint64_t seed = 42;
    std::string taxonomy = "iemocap6";
    FeatureDims dims;
};

/// Line-delimited dataset file: line 1 is the manifest object, each further
/// line is one conversation object. Load validates every invariant and
/// reports the offending line on failure.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& ds);
std::string dataset_to_text(const Dataset& ds);
Dataset dataset_from_text(const std::string& text, const std::string& origin);

/// Sticky-Markov synthetic conversations with planted class prototypes per
/// modality and an optional shared cross-modal latent per utterance.
Dataset generate_synthetic(const SynthConfig& cfg);

/// Conversation-granular split; deterministic under seed.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double ratio, uint64_t seed);

/// Sorted distinct speaker ids (the speaker universe used for relation typing).
std::vector<std::string> speaker_universe(const Dataset& ds);

std::string fine_to_coarse(const std::string& label, const LabelTaxonomy& tax);

}  // namespace merc
