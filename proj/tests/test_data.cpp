#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <set>

#include "merc/config.hpp"
#include "merc/dataset.hpp"
#include "merc/graph.hpp"
#include "merc/rng.hpp"

using namespace merc;

namespace {
SynthConfig tiny_synth(int n_conv = 4) {
    SynthConfig c;
    c.n_conversations = n_conv;
    c.len_lo = 3;
    c.len_hi = 6;
    c.dims = FeatureDims{8, 6, 5};
    c.seed = 9;
    return c;
}
}  // namespace

TEST_CASE("taxonomy presets carry the documented groupings") {
    const LabelTaxonomy iem = LabelTaxonomy::preset("iemocap6");
    CHECK(iem.n_fine() == 6);
    CHECK(fine_to_coarse("excited", iem) == "positive");
    CHECK(fine_to_coarse("happy", iem) == "positive");
    CHECK(fine_to_coarse("neutral", iem) == "neutral");
    CHECK(fine_to_coarse("sad", iem) == "negative");
    CHECK(fine_to_coarse("angry", iem) == "negative");
    CHECK(fine_to_coarse("frustrated", iem) == "negative");
    CHECK_THROWS_AS(fine_to_coarse("bored", iem), TaxonomyError);

    const LabelTaxonomy meld = LabelTaxonomy::preset("meld7");
    CHECK(meld.n_fine() == 7);
    CHECK(fine_to_coarse("joy", meld) == "positive");
    CHECK(fine_to_coarse("surprise", meld) == "positive");
    CHECK(fine_to_coarse("neutral", meld) == "neutral");
    for (const char* l : {"anger", "disgust", "fear", "sadness"})
        CHECK(fine_to_coarse(l, meld) == "negative");

    CHECK_THROWS_AS(LabelTaxonomy::preset("nope"), TaxonomyError);
    LabelTaxonomy broken = LabelTaxonomy::preset("iemocap6");
    broken.fine_to_coarse.erase("sad");
    CHECK_THROWS_AS(broken.validate(), TaxonomyError);
}

TEST_CASE("dataset save/load round-trips bit-exactly and deterministically") {
    Dataset ds = generate_synthetic(tiny_synth());
    const std::string text = dataset_to_text(ds);
    CHECK(text == dataset_to_text(generate_synthetic(tiny_synth())));  // fixed seed, fixed bytes

    Dataset back = dataset_from_text(text, "mem");
    REQUIRE(back.size() == ds.size());
    CHECK(back.manifest.taxonomy.fine_labels == ds.manifest.taxonomy.fine_labels);
    for (int c = 0; c < ds.size(); ++c) {
        const auto& a = ds.conversations[c];
        const auto& b = back.conversations[c];
        REQUIRE(a.id == b.id);
        REQUIRE(a.size() == b.size());
        for (int i = 0; i < a.size(); ++i) {
            CHECK(a.utterances[i].speaker == b.utterances[i].speaker);
            CHECK(a.utterances[i].label == b.utterances[i].label);
            CHECK(a.utterances[i].text == b.utterances[i].text);      // exact doubles
            CHECK(a.utterances[i].audio == b.utterances[i].audio);
            CHECK(a.utterances[i].visual == b.utterances[i].visual);
        }
    }
    // and a second serialization matches byte for byte
    CHECK(dataset_to_text(back) == text);
}

TEST_CASE("loader failures carry line numbers and conversation ids") {
    const std::string manifest =
        R"({"format_version": 1, "taxonomy": "iemocap6", "dims": {"text": 2, "audio": 2, "visual": 2}})";
    const std::string good =
        R"({"id": "c0", "utterances": [{"speaker": "a", "label": "sad", "text": [1, 2], "audio": [0, 0], "visual": [0, 1]}]})";

    CHECK(dataset_from_text(manifest + "\n" + good + "\n", "t").size() == 1);

    // wrong width
    const std::string wide =
        R"({"id": "c1", "utterances": [{"speaker": "a", "label": "sad", "text": [1, 2, 3], "audio": [0, 0], "visual": [0, 1]}]})";
    CHECK_THROWS_WITH_AS(dataset_from_text(manifest + "\n" + good + "\n" + wide + "\n", "t"),
                         doctest::Contains("line 3"), DataError);

    // empty conversation names the id
    const std::string empty = R"({"id": "lonely", "utterances": []})";
    CHECK_THROWS_WITH_AS(dataset_from_text(manifest + "\n" + empty + "\n", "t"),
                         doctest::Contains("lonely"), DataError);

    // unknown label
    const std::string bad_label =
        R"({"id": "c2", "utterances": [{"speaker": "a", "label": "meh", "text": [1, 2], "audio": [0, 0], "visual": [0, 1]}]})";
    CHECK_THROWS_AS(dataset_from_text(manifest + "\n" + bad_label + "\n", "t"), TaxonomyError);

    // malformed json and missing manifest
    CHECK_THROWS_WITH_AS(dataset_from_text(manifest + "\n{oops\n", "t"), doctest::Contains("line 2"),
                         DataError);
    CHECK_THROWS_AS(dataset_from_text("", "t"), DataError);
    CHECK_THROWS_AS(dataset_from_text(good + "\n", "t"), DataError);  // conversation before manifest
}

TEST_CASE("generator: inertia 1 freezes per-speaker labels; separation 0 leaves pure noise") {
    SynthConfig frozen = tiny_synth(6);
    frozen.speaker_inertia = 1.0;
    frozen.len_lo = 8;
    frozen.len_hi = 12;
    Dataset ds = generate_synthetic(frozen);
    for (const auto& conv : ds.conversations) {
        std::map<std::string, std::string> label_of;
        for (const auto& u : conv.utterances) {
            auto [it, fresh] = label_of.emplace(u.speaker, u.label);
            if (!fresh) CHECK(it->second == u.label);
        }
    }

    SynthConfig pure = tiny_synth(40);
    pure.separation = 0.0;
    pure.cross_modal_coupling = 0.0;
    pure.noise_sigma = 0.5;
    Dataset noise = generate_synthetic(pure);
    double ss = 0;
    long n = 0;
    for (const auto& conv : noise.conversations)
        for (const auto& u : conv.utterances)
            for (double x : u.text) {
                ss += x * x;
                ++n;
            }
    // per-entry second moment must be sigma^2, with no prototype energy on top
    CHECK(ss / n == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("generator label marginals stay uniform over many draws") {
    SynthConfig c;
    c.n_conversations = 9000;
    c.len_lo = 10;
    c.len_hi = 12;
    c.dims = FeatureDims{2, 2, 2};  // keep feature generation cheap
    c.seed = 31;
    Dataset ds = generate_synthetic(c);
    std::map<std::string, long> counts;
    long total = 0;
    for (const auto& conv : ds.conversations)
        for (const auto& u : conv.utterances) {
            counts[u.label]++;
            ++total;
        }
    CHECK(total >= 90000);
    const double expect = static_cast<double>(total) / 6.0;
    double chi2 = 0;
    for (const auto& l : ds.manifest.taxonomy.fine_labels) {
        const double d = counts[l] - expect;
        chi2 += d * d / expect;
        CHECK(std::fabs(counts[l] / static_cast<double>(total) - 1.0 / 6) < 0.02);
    }
    // sticky chains inflate the statistic relative to iid draws; the bound
    // accounts for within-conversation correlation
    CHECK(chi2 < 30.0 * 12.0);
}

TEST_CASE("split: 8/2 at ratio 0.8, deterministic, conversation-granular, degenerate rejected") {
    Dataset ds = generate_synthetic(tiny_synth(10));
    auto [train, test] = split_train_test(ds, 0.8, 7);
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);

    auto [train2, test2] = split_train_test(ds, 0.8, 7);
    for (int i = 0; i < train.size(); ++i) CHECK(train.conversations[i].id == train2.conversations[i].id);

    std::set<std::string> seen;
    for (const auto& c : train.conversations) seen.insert(c.id);
    for (const auto& c : test.conversations) CHECK(seen.insert(c.id).second);  // disjoint
    CHECK(seen.size() == 10);

    CHECK_THROWS_AS(split_train_test(ds, 1.0, 7), ConfigError);
    CHECK_THROWS_AS(split_train_test(ds, 0.0, 7), ConfigError);
    CHECK_THROWS_AS(split_train_test(ds, 0.01, 7), ConfigError);  // empty train side
}

TEST_CASE("synth config validation") {
    SynthConfig c = tiny_synth();
    c.cross_modal_coupling = 1.5;
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
    c = tiny_synth();
    c.len_hi = 1;
    c.len_lo = 3;
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
    c = tiny_synth();
    c.noise_sigma = 0.0;
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
}

TEST_CASE("edge list dump is one 1-indexed line per edge") {
    DialogueGraph g = build_graph(3, 1, 0);
    assign_relations(g, {0, 1, 0}, 2);
    const std::string dump = dump_edges(g);
    CHECK(dump.substr(0, 8) == "1 1 0 0\n");
    int lines = 0;
    for (char ch : dump) lines += ch == '\n';
    CHECK(lines == g.n_edges());
}

TEST_CASE("train config: json round trip, presets, unknown keys, bad values") {
    TrainConfig c;
    c.alpha = 0.4;
    c.seed = 77;
    c.modalities = "TA";
    TrainConfig back = TrainConfig::from_json_text(c.to_json_text(), "mem");
    CHECK(back.alpha == c.alpha);
    CHECK(back.seed == c.seed);
    CHECK(back.modalities == "TA");
    CHECK(back.d_model == c.d_model);

    TrainConfig paper = TrainConfig::from_json_text(R"({"preset": "paper"})", "mem");
    CHECK(paper.d_model == 512);
    CHECK(paper.h == 8);
    CHECK(paper.T == 2);
    CHECK(paper.epochs == 60);
    CHECK(paper.d_h() == 64);

    TrainConfig desk = TrainConfig::from_json_text(R"({})", "mem");
    CHECK(desk.d_model == 16);
    CHECK(desk.epochs == 15);
    CHECK(desk.batch_size == 32);
    CHECK(desk.learning_rate == 0.005);
    CHECK(desk.window_p == 10);
    CHECK(desk.window_f == 10);

    CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"nope": 1})", "mem"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"d_model": 10, "h": 3})", "mem"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"modalities": "TX"})", "mem"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"drop_rate": 1.0})", "mem"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json_text(R"({"float_mode": "f16"})", "mem"), ConfigError);

    // alpha resolves per taxonomy unless pinned
    TrainConfig unset;
    CHECK(unset.resolved_alpha(LabelTaxonomy::preset("iemocap6")) == 0.7);
    CHECK(unset.resolved_alpha(LabelTaxonomy::preset("meld7")) == 0.5);
    CHECK(c.resolved_alpha(LabelTaxonomy::preset("meld7")) == 0.4);
}

TEST_CASE("run metadata round-trips") {
    RunMeta m;
    m.cfg.seed = 5;
    m.cfg.modalities = "TV";
    m.speakers = {"a", "b", "c"};
    m.fine_labels = LabelTaxonomy::preset("iemocap6").fine_labels;
    m.alpha = 0.7;
    RunMeta back = RunMeta::from_json_text(m.to_json_text(), "mem");
    CHECK(back.cfg.seed == 5);
    CHECK(back.cfg.modalities == "TV");
    CHECK(back.speakers == m.speakers);
    CHECK(back.fine_labels == m.fine_labels);
    CHECK(back.alpha == 0.7);
}
