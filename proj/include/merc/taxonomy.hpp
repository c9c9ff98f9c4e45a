#pragma once

#include <map>
#include <string>
#include <vector>

#include "merc/common.hpp"

namespace merc {

/// Fine emotion labels plus their grouping into coarse sentiment classes.
/// Built-in presets: "iemocap6" and "meld7".
struct LabelTaxonomy {
    std::string name;  // preset name or "custom"
    std::vector<std::string> fine_labels;
    std::vector<std::string> coarse_labels;
    std::map<std::string, std::string> fine_to_coarse;

    int n_fine() const { return static_cast<int>(fine_labels.size()); }
    int n_coarse() const { return static_cast<int>(coarse_labels.size()); }

    int fine_index(const std::string& label) const;
    int coarse_index(const std::string& label) const;
    const std::string& coarse_of(const std::string& fine) const;
    /// fine class index -> coarse class index
    int coarse_index_of_fine(int fine_idx) const;

    void validate() const;

    static bool is_preset(const std::string& name);
    static LabelTaxonomy preset(const std::string& name);
};

}  // namespace merc
