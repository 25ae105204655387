#include "agentprune/topology.hpp"

#include <algorithm>
#include <numeric>

#include "agentprune/error.hpp"

namespace agentprune {

std::string_view to_string(TopologyTag tag) noexcept {
    switch (tag) {
        case TopologyTag::Chain: return "chain";
        case TopologyTag::Star: return "star";
        case TopologyTag::Tree: return "tree";
        case TopologyTag::Complete: return "complete";
        case TopologyTag::Layered: return "layered";
        case TopologyTag::Random: return "random";
    }
    return "complete";
}

TopologyTag topology_tag_from_string(std::string_view text) {
    for (auto tag : {TopologyTag::Chain, TopologyTag::Star, TopologyTag::Tree, TopologyTag::Complete,
                     TopologyTag::Layered, TopologyTag::Random}) {
        if (to_string(tag) == text) return tag;
    }
    throw Error(Errc::InvalidConfig, "unknown topology '" + std::string(text) + "'");
}

namespace {

Adjacency complete_dag(std::size_t n) {
    Adjacency adj(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) adj.set(i, j);
    return adj;
}

bool has_in_edge(const Adjacency& adj, std::size_t v) {
    for (std::size_t u = 0; u < adj.size(); ++u)
        if (adj(u, v)) return true;
    return false;
}

}  // namespace

Adjacency build_spatial(const TopologyKind& kind, std::size_t n) {
    const std::size_t minimum = (kind.tag == TopologyTag::Star || kind.tag == TopologyTag::Tree) ? 3 : 2;
    if (kind.tag != TopologyTag::Layered && n < minimum) {
        throw Error(Errc::TooFewAgents, std::string(to_string(kind.tag)) + " needs at least " +
                                            std::to_string(minimum) + " agents, got " + std::to_string(n));
    }

    Adjacency adj(n);
    switch (kind.tag) {
        case TopologyTag::Chain:
            for (std::size_t i = 0; i + 1 < n; ++i) adj.set(i, i + 1);
            break;
        case TopologyTag::Star:
            for (std::size_t i = 1; i < n; ++i) adj.set(i, 0);
            break;
        case TopologyTag::Tree:
            for (std::size_t i = 1; i < n; ++i) adj.set(i, (i - 1) / 2);
            break;
        case TopologyTag::Complete:
            adj = complete_dag(n);
            break;
        case TopologyTag::Layered: {
            const auto& widths = kind.layer_widths;
            const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
            if (widths.size() < 2 || total != n || widths.back() != 1 ||
                std::find(widths.begin(), widths.end(), std::size_t{0}) != widths.end()) {
                throw Error(Errc::BadLayerSpec, "layer widths must be positive, sum to " + std::to_string(n) +
                                                    " and end in a single agent");
            }
            std::size_t start = 0;
            for (std::size_t layer = 0; layer + 1 < widths.size(); ++layer) {
                const std::size_t next = start + widths[layer];
                for (std::size_t i = start; i < next; ++i)
                    for (std::size_t j = next; j < next + widths[layer + 1]; ++j) adj.set(i, j);
                start = next;
            }
            break;
        }
        case TopologyTag::Random: {
            if (!(kind.edge_probability > 0.0 && kind.edge_probability <= 1.0)) {
                throw Error(Errc::InvalidConfig, "random topology probability must lie in (0, 1]");
            }
            Rng rng(kind.seed);
            do {
                adj = Adjacency(n);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = i + 1; j < n; ++j)
                        if (rng.uniform() < kind.edge_probability) adj.set(i, j);
            } while (!has_in_edge(adj, n - 1));
            break;
        }
    }
    return adj;
}

NodeId terminal_node(const TopologyKind& kind, std::size_t n) {
    if (kind.tag == TopologyTag::Star || kind.tag == TopologyTag::Tree) return 0;
    return static_cast<NodeId>(n) - 1;
}

Adjacency build_temporal_full(std::size_t n) {
    if (n < 1) throw Error(Errc::TooFewAgents, "temporal graph needs at least one agent");
    return Adjacency::ones(n);
}

}  // namespace agentprune
