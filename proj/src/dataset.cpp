#include "merc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "merc/params.hpp"
#include "merc/rng.hpp"

namespace merc {

namespace {

using nlohmann::json;

LabelTaxonomy taxonomy_from_json(const json& j) {
    if (j.is_string()) return LabelTaxonomy::preset(j.get<std::string>());
    if (!j.is_object()) throw DataError("taxonomy must be a preset name or an object");
    LabelTaxonomy t;
    t.name = j.value("name", std::string("custom"));
    for (const auto& v : j.at("fine")) t.fine_labels.push_back(v.get<std::string>());
    for (const auto& v : j.at("coarse")) t.coarse_labels.push_back(v.get<std::string>());
    for (auto it = j.at("map").begin(); it != j.at("map").end(); ++it)
        t.fine_to_coarse[it.key()] = it.value().get<std::string>();
    t.validate();
    return t;
}

void write_taxonomy(std::ostream& os, const LabelTaxonomy& t) {
    if (LabelTaxonomy::is_preset(t.name)) {
        os << '"' << t.name << '"';
        return;
    }
    os << "{\"name\": \"" << t.name << "\", \"fine\": [";
    for (size_t i = 0; i < t.fine_labels.size(); ++i) os << (i ? ", " : "") << '"' << t.fine_labels[i] << '"';
    os << "], \"coarse\": [";
    for (size_t i = 0; i < t.coarse_labels.size(); ++i) os << (i ? ", " : "") << '"' << t.coarse_labels[i] << '"';
    os << "], \"map\": {";
    bool first = true;
    for (const auto& [f, c] : t.fine_to_coarse) {
        os << (first ? "" : ", ") << '"' << f << "\": \"" << c << '"';
        first = false;
    }
    os << "}}";
}

void write_vector(std::ostream& os, const std::vector<double>& v) {
    os << '[';
    for (size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << format_g17(v[i]);
    os << ']';
}

std::vector<double> read_vector(const json& j) {
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& x : j) v.push_back(x.get<double>());
    return v;
}

void check_utterance(const Utterance& u, const DatasetManifest& m, const std::string& where) {
    if (u.speaker.empty()) throw DataError(where + ": empty speaker id");
    m.taxonomy.fine_index(u.label);  // throws on unknown label
    if (static_cast<int>(u.text.size()) != m.dims.text)
        throw DataError(where + ": text feature has " + std::to_string(u.text.size()) + " dims, manifest says " +
                        std::to_string(m.dims.text));
    if (static_cast<int>(u.audio.size()) != m.dims.audio)
        throw DataError(where + ": audio feature has " + std::to_string(u.audio.size()) + " dims, manifest says " +
                        std::to_string(m.dims.audio));
    if (static_cast<int>(u.visual.size()) != m.dims.visual)
        throw DataError(where + ": visual feature has " + std::to_string(u.visual.size()) + " dims, manifest says " +
                        std::to_string(m.dims.visual));
}

}  // namespace

std::string fine_to_coarse(const std::string& label, const LabelTaxonomy& tax) { return tax.coarse_of(label); }

std::string dataset_to_text(const Dataset& ds) {
    std::ostringstream os;
    os << "{\"format_version\": " << ds.manifest.format_version << ", \"taxonomy\": ";
    write_taxonomy(os, ds.manifest.taxonomy);
    os << ", \"dims\": {\"text\": " << ds.manifest.dims.text << ", \"audio\": " << ds.manifest.dims.audio
       << ", \"visual\": " << ds.manifest.dims.visual << "}}\n";
    for (const auto& conv : ds.conversations) {
        os << "{\"id\": \"" << conv.id << "\", \"utterances\": [";
        for (size_t i = 0; i < conv.utterances.size(); ++i) {
            const auto& u = conv.utterances[i];
            os << (i ? ", " : "") << "{\"speaker\": \"" << u.speaker << "\", \"label\": \"" << u.label
               << "\", \"text\": ";
            write_vector(os, u.text);
            os << ", \"audio\": ";
            write_vector(os, u.audio);
            os << ", \"visual\": ";
            write_vector(os, u.visual);
            os << '}';
        }
        os << "]}\n";
    }
    return os.str();
}

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open dataset for writing: " + path);
    f << dataset_to_text(ds);
    if (!f) throw DataError("failed writing dataset: " + path);
}

Dataset dataset_from_text(const std::string& text, const std::string& origin) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    Dataset ds;
    bool have_manifest = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(origin + " line " + std::to_string(lineno) + ": malformed record: " + e.what());
        }
        const std::string where = origin + " line " + std::to_string(lineno);
        try {
            if (!have_manifest) {
                ds.manifest.format_version = j.at("format_version").get<int>();
                if (ds.manifest.format_version != 1)
                    throw DataError("unsupported format_version " + std::to_string(ds.manifest.format_version));
                ds.manifest.taxonomy = taxonomy_from_json(j.at("taxonomy"));
                const auto& d = j.at("dims");
                ds.manifest.dims.text = d.at("text").get<int>();
                ds.manifest.dims.audio = d.at("audio").get<int>();
                ds.manifest.dims.visual = d.at("visual").get<int>();
                if (ds.manifest.dims.text <= 0 || ds.manifest.dims.audio <= 0 || ds.manifest.dims.visual <= 0)
                    throw DataError("manifest dims must be positive");
                have_manifest = true;
                continue;
            }
            Conversation conv;
            conv.id = j.at("id").get<std::string>();
            for (const auto& ju : j.at("utterances")) {
                Utterance u;
                u.speaker = ju.at("speaker").get<std::string>();
                u.label = ju.at("label").get<std::string>();
                u.text = read_vector(ju.at("text"));
                u.audio = read_vector(ju.at("audio"));
                u.visual = read_vector(ju.at("visual"));
                check_utterance(u, ds.manifest, where + " (conversation " + conv.id + ")");
                conv.utterances.push_back(std::move(u));
            }
            if (conv.utterances.empty())
                throw DataError(where + ": conversation " + conv.id + " has no utterances");
            ds.conversations.push_back(std::move(conv));
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    if (!have_manifest) throw DataError(origin + ": missing manifest line");
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open dataset: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return dataset_from_text(ss.str(), path);
}

namespace {

std::vector<double> unit_vector(int dim, RngStream& rng) {
    std::vector<double> v(dim);
    double norm = 0;
    for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0) norm = 1;
    for (auto& x : v) x /= norm;
    return v;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_conversations <= 0) throw ConfigError("n_conversations must be positive");
    if (cfg.len_lo <= 0 || cfg.len_hi < cfg.len_lo) throw ConfigError("len_range must be a nonempty positive range");
    if (cfg.n_speakers <= 0) throw ConfigError("n_speakers must be positive");
    if (cfg.separation < 0) throw ConfigError("separation must be >= 0");
    if (cfg.cross_modal_coupling < 0 || cfg.cross_modal_coupling > 1)
        throw ConfigError("cross_modal_coupling must be in [0,1]");
    if (cfg.speaker_inertia < 0 || cfg.speaker_inertia > 1) throw ConfigError("speaker_inertia must be in [0,1]");
    if (!(cfg.noise_sigma > 0)) throw ConfigError("noise_sigma must be > 0");

    Dataset ds;
    ds.manifest.taxonomy = LabelTaxonomy::preset(cfg.taxonomy);
    ds.manifest.dims = cfg.dims;
    const auto& tax = ds.manifest.taxonomy;
    const int L = tax.n_fine();
    const int dims[3] = {cfg.dims.text, cfg.dims.audio, cfg.dims.visual};
    const char* mod_names[3] = {"text", "audio", "visual"};

    // Fixed unit-norm class prototypes per (label, modality); high dimension
    // makes independent gaussian directions nearly orthogonal.
    std::vector<std::vector<std::vector<double>>> proto(3);  // [mod][label][dim]
    for (int m = 0; m < 3; ++m) {
        proto[m].resize(L);
        for (int l = 0; l < L; ++l) {
            RngStream s(RngPurpose::datagen,
                        RngStream::derive(cfg.seed, std::string("proto:") + mod_names[m] + ":" + tax.fine_labels[l]));
            proto[m][l] = unit_vector(dims[m], s);
        }
    }

    for (int k = 0; k < cfg.n_conversations; ++k) {
        RngStream rng(RngPurpose::datagen, RngStream::derive(cfg.seed, 0x636f6e76ULL, static_cast<uint64_t>(k)));
        Conversation conv;
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "conv%05d", k);
            conv.id = buf;
        }
        const int len = cfg.len_lo + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.len_hi - cfg.len_lo + 1)));
        std::vector<int> speaker_state(cfg.n_speakers, -1);  // current emotion per speaker
        for (int i = 0; i < len; ++i) {
            Utterance u;
            const int spk = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.n_speakers)));
            u.speaker = "s" + std::to_string(spk);
            int& state = speaker_state[spk];
            if (state < 0) {
                state = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(L)));
            } else if (!rng.bernoulli(cfg.speaker_inertia)) {
                // switch uniformly to one of the other labels
                int other = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(L - 1)));
                if (other >= state) ++other;
                state = other;
            }
            u.label = tax.fine_labels[state];
            // With probability cross_modal_coupling the utterance carries a
            // shared latent: one coefficient z for all three modalities,
            // applied along a fresh direction per modality. Any single
            // modality sees it as large unremovable noise; jointly the class
            // signal survives because the three contaminations are diluted
            // across the concatenated feature space.
            const bool coupled = rng.bernoulli(cfg.cross_modal_coupling);
            const double z = coupled ? rng.normal() : 0.0;
            std::vector<double>* feats[3] = {&u.text, &u.audio, &u.visual};
            for (int m = 0; m < 3; ++m) {
                feats[m]->resize(dims[m]);
                std::vector<double> dir;
                if (coupled) dir = unit_vector(dims[m], rng);
                for (int d = 0; d < dims[m]; ++d) {
                    double x = cfg.separation * proto[m][state][d] + cfg.noise_sigma * rng.normal();
                    if (coupled) x += z * cfg.separation * cfg.latent_scale * dir[d];
                    (*feats[m])[d] = x;
                }
            }
            conv.utterances.push_back(std::move(u));
        }
        ds.conversations.push_back(std::move(conv));
    }
    return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double ratio, uint64_t seed) {
    if (!(ratio > 0.0) || !(ratio < 1.0)) throw ConfigError("split ratio must be in (0,1)");
    const int n = ds.size();
    if (n < 2) throw ConfigError("cannot split a dataset of " + std::to_string(n) + " conversations");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    RngStream rng(RngPurpose::shuffle, seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(i) + 1));
        std::swap(idx[i], idx[j]);
    }
    const int n_train = static_cast<int>(std::floor(ratio * n + 0.5));
    if (n_train <= 0 || n_train >= n)
        throw ConfigError("degenerate split: " + std::to_string(n_train) + "/" + std::to_string(n - n_train));
    Dataset train, test;
    train.manifest = ds.manifest;
    test.manifest = ds.manifest;
    for (int i = 0; i < n; ++i)
        (i < n_train ? train : test).conversations.push_back(ds.conversations[idx[i]]);
    return {std::move(train), std::move(test)};
}

std::vector<std::string> speaker_universe(const Dataset& ds) {
    std::set<std::string> s;
    for (const auto& c : ds.conversations)
        for (const auto& u : c.utterances) s.insert(u.speaker);
    return {s.begin(), s.end()};
}

}  // namespace merc
