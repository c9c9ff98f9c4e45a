#include "merc/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "merc/params.hpp"

namespace merc {

namespace {

using nlohmann::json;

json parse_file_or_throw(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": malformed JSON: " + e.what());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void apply_preset(TrainConfig& c, const std::string& preset) {
    if (preset == "desk") {
        c.epochs = 15;
        c.d_model = 16;
        c.h = 2;
        c.T = 1;
        c.d_g = 12;
        c.d_h1 = 32;
        c.d_h2 = 32;
        c.mlp_hidden = 32;
    } else if (preset == "paper") {
        c.epochs = 60;
        c.d_model = 512;
        c.h = 8;
        c.T = 2;
        c.d_g = 100;
        c.d_h1 = 100;
        c.d_h2 = 100;
        c.mlp_hidden = 256;
    } else {
        throw ConfigError("unknown preset '" + preset + "' (expected desk or paper)");
    }
    c.preset = preset;
}

}  // namespace

double TrainConfig::resolved_alpha(const LabelTaxonomy& tax) const {
    if (alpha >= 0) return alpha;
    if (tax.name == "meld7") return 0.5;
    return 0.7;
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
    if (alpha >= 0 && alpha > 1) throw ConfigError("alpha must be in [0,1]");
    if (lambda < 0) throw ConfigError("lambda must be >= 0");
    if (drop_rate < 0 || drop_rate >= 1) throw ConfigError("drop_rate must be in [0,1)");
    if (window_p < 0 || window_f < 0) throw ConfigError("window sizes must be >= 0");
    if (d_model <= 0 || h <= 0 || T <= 0 || d_g <= 0 || d_h1 <= 0 || d_h2 <= 0 || mlp_hidden <= 0)
        throw ConfigError("model widths must be positive");
    if (d_model % h != 0) throw ConfigError("d_model must be divisible by h");
    if (!(ln_eps > 0)) throw ConfigError("ln_eps must be > 0");
    if (relation_norm != "learned" && relation_norm != "neighborhood")
        throw ConfigError("relation_norm must be 'learned' or 'neighborhood'");
    if (modalities.empty()) throw ConfigError("modalities must be nonempty");
    for (char m : modalities)
        if (m != 'T' && m != 'A' && m != 'V') throw ConfigError(std::string("unknown modality '") + m + "'");
    if (float_mode != "f64" && float_mode != "f32") throw ConfigError("float_mode must be 'f64' or 'f32'");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

TrainConfig TrainConfig::from_json_text(const std::string& text, const std::string& origin) {
    json j = parse_file_or_throw(text, origin);
    if (!j.is_object()) throw ConfigError(origin + ": config root must be an object");
    TrainConfig c;
    apply_preset(c, j.value("preset", std::string("desk")));

    static const char* known[] = {"preset",     "epochs",     "batch_size",  "learning_rate", "alpha",
                                  "lambda",     "drop_rate",  "drop_rescale", "seed",          "window_p",
                                  "window_f",   "d_model",    "h",           "T",             "d_g",
                                  "d_h1",       "d_h2",       "mlp_hidden",  "ln_eps",        "relation_norm",
                                  "disable_cam", "disable_graph", "modalities", "float_mode", "threads"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(origin + ": unknown config key '" + it.key() + "'");
    }

    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.alpha = j.value("alpha", c.alpha);
        c.lambda = j.value("lambda", c.lambda);
        c.drop_rate = j.value("drop_rate", c.drop_rate);
        c.drop_rescale = j.value("drop_rescale", c.drop_rescale);
        c.seed = j.value("seed", c.seed);
        c.window_p = j.value("window_p", c.window_p);
        c.window_f = j.value("window_f", c.window_f);
        c.d_model = j.value("d_model", c.d_model);
        c.h = j.value("h", c.h);
        c.T = j.value("T", c.T);
        c.d_g = j.value("d_g", c.d_g);
        c.d_h1 = j.value("d_h1", c.d_h1);
        c.d_h2 = j.value("d_h2", c.d_h2);
        c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
        c.ln_eps = j.value("ln_eps", c.ln_eps);
        c.relation_norm = j.value("relation_norm", c.relation_norm);
        c.disable_cam = j.value("disable_cam", c.disable_cam);
        c.disable_graph = j.value("disable_graph", c.disable_graph);
        c.modalities = j.value("modalities", c.modalities);
        c.float_mode = j.value("float_mode", c.float_mode);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) { return from_json_text(read_file(path), path); }

std::string TrainConfig::to_json_text() const {
    std::ostringstream os;
    os << "{\n";
    os << "  \"preset\": \"" << preset << "\",\n";
    os << "  \"epochs\": " << epochs << ",\n";
    os << "  \"batch_size\": " << batch_size << ",\n";
    os << "  \"learning_rate\": " << format_g17(learning_rate) << ",\n";
    os << "  \"alpha\": " << format_g17(alpha) << ",\n";
    os << "  \"lambda\": " << format_g17(lambda) << ",\n";
    os << "  \"drop_rate\": " << format_g17(drop_rate) << ",\n";
    os << "  \"drop_rescale\": " << (drop_rescale ? "true" : "false") << ",\n";
    os << "  \"seed\": " << seed << ",\n";
    os << "  \"window_p\": " << window_p << ",\n";
    os << "  \"window_f\": " << window_f << ",\n";
    os << "  \"d_model\": " << d_model << ",\n";
    os << "  \"h\": " << h << ",\n";
    os << "  \"T\": " << T << ",\n";
    os << "  \"d_g\": " << d_g << ",\n";
    os << "  \"d_h1\": " << d_h1 << ",\n";
    os << "  \"d_h2\": " << d_h2 << ",\n";
    os << "  \"mlp_hidden\": " << mlp_hidden << ",\n";
    os << "  \"ln_eps\": " << format_g17(ln_eps) << ",\n";
    os << "  \"relation_norm\": \"" << relation_norm << "\",\n";
    os << "  \"disable_cam\": " << (disable_cam ? "true" : "false") << ",\n";
    os << "  \"disable_graph\": " << (disable_graph ? "true" : "false") << ",\n";
    os << "  \"modalities\": \"" << modalities << "\",\n";
    os << "  \"float_mode\": \"" << float_mode << "\",\n";
    os << "  \"threads\": " << threads << "\n";
    os << "}\n";
    return os.str();
}

void TrainConfig::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write config: " + path);
    f << to_json_text();
}

SynthConfig synth_config_from_json_text(const std::string& text, const std::string& origin) {
    json j = parse_file_or_throw(text, origin);
    if (!j.is_object()) throw ConfigError(origin + ": config root must be an object");
    SynthConfig c;
    try {
        c.n_conversations = j.value("n_conversations", c.n_conversations);
        if (j.contains("len_range")) {
            c.len_lo = j["len_range"].at(0).get<int>();
            c.len_hi = j["len_range"].at(1).get<int>();
        }
        c.n_speakers = j.value("n_speakers", c.n_speakers);
        c.separation = j.value("separation", c.separation);
        c.cross_modal_coupling = j.value("cross_modal_coupling", c.cross_modal_coupling);
        c.speaker_inertia = j.value("speaker_inertia", c.speaker_inertia);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.latent_scale = j.value("latent_scale", c.latent_scale);
        c.seed = j.value("seed", c.seed);
        c.taxonomy = j.value("taxonomy", c.taxonomy);
        if (j.contains("dims")) {
            c.dims.text = j["dims"].value("text", c.dims.text);
            c.dims.audio = j["dims"].value("audio", c.dims.audio);
            c.dims.visual = j["dims"].value("visual", c.dims.visual);
        }
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return c;
}

SynthConfig load_synth_config(const std::string& path) {
    return synth_config_from_json_text(read_file(path), path);
}

std::string RunMeta::to_json_text() const {
    std::ostringstream os;
    os << "{\n  \"config\": " << cfg.to_json_text();
    // strip the trailing newline of the embedded object
    std::string s = os.str();
    if (!s.empty() && s.back() == '\n') s.pop_back();
    std::ostringstream tail;
    tail << ",\n  \"speakers\": [";
    for (size_t i = 0; i < speakers.size(); ++i) tail << (i ? ", " : "") << '"' << speakers[i] << '"';
    tail << "],\n  \"fine_labels\": [";
    for (size_t i = 0; i < fine_labels.size(); ++i) tail << (i ? ", " : "") << '"' << fine_labels[i] << '"';
    tail << "],\n  \"alpha\": " << format_g17(alpha) << "\n}\n";
    return s + tail.str();
}

void RunMeta::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write run metadata: " + path);
    f << to_json_text();
}

RunMeta RunMeta::from_json_text(const std::string& text, const std::string& origin) {
    json j = parse_file_or_throw(text, origin);
    RunMeta m;
    try {
        m.cfg = TrainConfig::from_json_text(j.at("config").dump(), origin + "#config");
        for (const auto& s : j.at("speakers")) m.speakers.push_back(s.get<std::string>());
        for (const auto& s : j.at("fine_labels")) m.fine_labels.push_back(s.get<std::string>());
        m.alpha = j.at("alpha").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return m;
}

RunMeta RunMeta::load(const std::string& path) { return from_json_text(read_file(path), path); }

}  // namespace merc
