#include "merc/taxonomy.hpp"

#include <algorithm>

namespace merc {

int LabelTaxonomy::fine_index(const std::string& label) const {
    auto it = std::find(fine_labels.begin(), fine_labels.end(), label);
    if (it == fine_labels.end()) throw TaxonomyError("unknown fine label '" + label + "' in taxonomy " + name);
    return static_cast<int>(it - fine_labels.begin());
}

int LabelTaxonomy::coarse_index(const std::string& label) const {
    auto it = std::find(coarse_labels.begin(), coarse_labels.end(), label);
    if (it == coarse_labels.end()) throw TaxonomyError("unknown coarse label '" + label + "' in taxonomy " + name);
    return static_cast<int>(it - coarse_labels.begin());
}

const std::string& LabelTaxonomy::coarse_of(const std::string& fine) const {
    auto it = fine_to_coarse.find(fine);
    if (it == fine_to_coarse.end()) throw TaxonomyError("fine label '" + fine + "' has no coarse mapping");
    return it->second;
}

int LabelTaxonomy::coarse_index_of_fine(int fine_idx) const {
    if (fine_idx < 0 || fine_idx >= n_fine()) throw TaxonomyError("fine index out of range");
    return coarse_index(coarse_of(fine_labels[fine_idx]));
}

void LabelTaxonomy::validate() const {
    if (fine_labels.empty() || coarse_labels.empty()) throw TaxonomyError("taxonomy " + name + " has empty label set");
    for (const auto& f : fine_labels) {
        auto it = fine_to_coarse.find(f);
        if (it == fine_to_coarse.end()) throw TaxonomyError("fine label '" + f + "' has no coarse mapping");
        coarse_index(it->second);  // throws if the target class is unknown
    }
    for (size_t i = 0; i < fine_labels.size(); ++i)
        for (size_t j = i + 1; j < fine_labels.size(); ++j)
            if (fine_labels[i] == fine_labels[j]) throw TaxonomyError("duplicate fine label '" + fine_labels[i] + "'");
}

bool LabelTaxonomy::is_preset(const std::string& name) { return name == "iemocap6" || name == "meld7"; }

LabelTaxonomy LabelTaxonomy::preset(const std::string& name) {
    LabelTaxonomy t;
    t.name = name;
    if (name == "iemocap6") {
        t.fine_labels = {"happy", "sad", "neutral", "angry", "excited", "frustrated"};
        t.coarse_labels = {"positive", "neutral", "negative"};
        t.fine_to_coarse = {{"happy", "positive"},  {"excited", "positive"}, {"neutral", "neutral"},
                            {"sad", "negative"},    {"angry", "negative"},   {"frustrated", "negative"}};
    } else if (name == "meld7") {
        t.fine_labels = {"anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"};
        t.coarse_labels = {"positive", "neutral", "negative"};
        t.fine_to_coarse = {{"joy", "positive"},      {"surprise", "positive"}, {"neutral", "neutral"},
                            {"anger", "negative"},    {"disgust", "negative"},  {"fear", "negative"},
                            {"sadness", "negative"}};
    } else {
        throw TaxonomyError("unknown taxonomy preset '" + name + "'");
    }
    t.validate();
    return t;
}

}  // namespace merc
