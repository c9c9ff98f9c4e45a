#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "merc/common.hpp"
#include "merc/rng.hpp"

namespace merc {

/// Maps (source speaker, destination speaker, past-or-self vs future) to a
/// relation id in [0, 2*M*M).
struct RelationTyping {
    int n_speakers = 0;
    int id(int spk_src, int spk_dst, bool past_or_self) const {
        return (spk_src * n_speakers + spk_dst) * 2 + (past_or_self ? 0 : 1);
    }
    int count() const { return 2 * n_speakers * n_speakers; }
};

struct GraphEdge {
    int src = 0;       // 0-indexed node j (message sender)
    int dst = 0;       // 0-indexed node i (message receiver)
    int relation = -1;
    double weight = 0;  // alpha_ij once computed
};

/// Windowed directed dialogue graph. Edges are stored destination-major with
/// ascending sources, so per-node incoming edges occupy one contiguous span.
struct DialogueGraph {
    int n_nodes = 0;
    int window_p = 0, window_f = 0;
    std::vector<GraphEdge> edges;
    std::vector<int> span_begin;  // per destination node: first edge index
    std::vector<int> span_end;    // per destination node: one past last
    std::vector<int> speaker_of;  // node -> speaker index (set with relations)
    bool weights_set = false;
    bool relations_set = false;

    int n_edges() const { return static_cast<int>(edges.size()); }
    int in_degree(int i) const { return span_end[i] - span_begin[i]; }
    /// Edge index of the self-loop of node i.
    int self_edge(int i) const {
        for (int e = span_begin[i]; e < span_end[i]; ++e)
            if (edges[e].src == i) return e;
        throw StateError("node " + std::to_string(i) + " has no self-loop");
    }
};

/// Windowed topology: edge (j -> i) exists iff max(0, i-p) <= j <= min(N-1, i+f)
/// (0-indexed); the self-loop j == i is always inside the window.
DialogueGraph build_graph(int n_utterances, int p, int f);

/// Expected edge count of the windowed topology, used by tests.
long windowed_edge_count(int n, int p, int f);

/// Relation id per edge from speaker identities; speaker_idx holds each
/// node's index into the speaker universe of size n_speakers.
void assign_relations(DialogueGraph& g, const std::vector<int>& speaker_idx, int n_speakers);

/// Training-time Bernoulli keep masks over node messages and edges.
struct DropMask {
    std::vector<uint8_t> node_keep;
    std::vector<uint8_t> edge_keep;
    double rate = 0;
    bool rescale = true;
    bool active = false;  // false in eval mode: everything kept, factor 1

    double node_factor(int i) const {
        if (!active) return 1.0;
        if (!node_keep[i]) return 0.0;
        return rescale ? 1.0 / (1.0 - rate) : 1.0;
    }
    double edge_factor(int e) const {
        if (!active) return 1.0;
        if (!edge_keep[e]) return 0.0;
        return rescale ? 1.0 / (1.0 - rate) : 1.0;
    }

    static DropMask all_keep(int n_nodes, int n_edges);
    static DropMask draw(int n_nodes, int n_edges, double rate, bool rescale, RngStream& rng, bool training);
};

/// Debug dump, one edge per line: "src dst relation weight", 1-indexed nodes.
std::string dump_edges(const DialogueGraph& g);

}  // namespace merc
