#include "merc/graph.hpp"

#include <algorithm>
#include <sstream>

#include "merc/params.hpp"

namespace merc {

DialogueGraph build_graph(int n_utterances, int p, int f) {
    if (n_utterances <= 0) throw DataError("cannot build a dialogue graph over an empty conversation");
    if (p < 0 || f < 0) throw ConfigError("window sizes must be >= 0");
    DialogueGraph g;
    g.n_nodes = n_utterances;
    g.window_p = p;
    g.window_f = f;
    g.span_begin.resize(n_utterances);
    g.span_end.resize(n_utterances);
    for (int i = 0; i < n_utterances; ++i) {
        g.span_begin[i] = g.n_edges();
        const int lo = std::max(0, i - p);
        const int hi = std::min(n_utterances - 1, i + f);
        for (int j = lo; j <= hi; ++j) g.edges.push_back(GraphEdge{j, i, -1, 0.0});
        g.span_end[i] = g.n_edges();
    }
    return g;
}

long windowed_edge_count(int n, int p, int f) {
    long total = 0;
    for (int i = 0; i < n; ++i)
        total += std::min(n - 1, i + f) - std::max(0, i - p) + 1;
    return total;
}

void assign_relations(DialogueGraph& g, const std::vector<int>& speaker_idx, int n_speakers) {
    if (static_cast<int>(speaker_idx.size()) != g.n_nodes)
        throw ShapeError("assign_relations: " + std::to_string(speaker_idx.size()) + " speakers for " +
                         std::to_string(g.n_nodes) + " nodes");
    const RelationTyping typing{n_speakers};
    for (auto& e : g.edges) {
        if (speaker_idx[e.src] < 0 || speaker_idx[e.src] >= n_speakers || speaker_idx[e.dst] < 0 ||
            speaker_idx[e.dst] >= n_speakers)
            throw DataError("speaker index out of range for relation typing");
        e.relation = typing.id(speaker_idx[e.src], speaker_idx[e.dst], e.src <= e.dst);
    }
    g.speaker_of = speaker_idx;
    g.relations_set = true;
}

DropMask DropMask::all_keep(int n_nodes, int n_edges) {
    DropMask m;
    m.node_keep.assign(n_nodes, 1);
    m.edge_keep.assign(n_edges, 1);
    m.rate = 0;
    m.active = false;
    return m;
}

DropMask DropMask::draw(int n_nodes, int n_edges, double rate, bool rescale, RngStream& rng, bool training) {
    if (!training) return all_keep(n_nodes, n_edges);
    if (rate < 0 || rate >= 1) throw ConfigError("drop rate must be in [0,1) for training");
    DropMask m;
    m.rate = rate;
    m.rescale = rescale;
    m.active = true;
    m.node_keep.resize(n_nodes);
    m.edge_keep.resize(n_edges);
    for (int i = 0; i < n_nodes; ++i) m.node_keep[i] = rng.bernoulli(rate) ? 0 : 1;
    for (int e = 0; e < n_edges; ++e) m.edge_keep[e] = rng.bernoulli(rate) ? 0 : 1;
    return m;
}

std::string dump_edges(const DialogueGraph& g) {
    std::ostringstream os;
    for (const auto& e : g.edges)
        os << (e.src + 1) << ' ' << (e.dst + 1) << ' ' << e.relation << ' ' << format_g17(e.weight) << '\n';
    return os.str();
}

}  // namespace merc
