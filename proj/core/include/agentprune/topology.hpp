#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "agentprune/graph.hpp"

namespace agentprune {

enum class TopologyTag { Chain, Star, Tree, Complete, Layered, Random };

std::string_view to_string(TopologyTag tag) noexcept;
TopologyTag topology_tag_from_string(std::string_view text);

struct TopologyKind {
    TopologyTag tag = TopologyTag::Complete;
    std::vector<std::size_t> layer_widths;  // layered only
    double edge_probability = 0.5;          // random only
    std::uint64_t seed = 0;                 // random only
};

/// Predefined spatial topologies. Every result is a DAG whose sink is the
/// decision agent reported by terminal_node().
///
///   chain     i -> i+1
///   star      every subordinate i > 0 reports to hub 0
///   tree      binary-heap indexing, child i -> parent (i-1)/2
///   complete  all i -> j with i < j
///   layered   all edges between consecutive layers, nodes numbered by layer
///   random    complete-DAG edges kept with edge_probability; redrawn while
///             the final node has no in-edge
Adjacency build_spatial(const TopologyKind& kind, std::size_t n);

/// Agent that produces the system's decision for a topology built above.
NodeId terminal_node(const TopologyKind& kind, std::size_t n);

/// All-ones matrix: every agent hears every agent's previous-round output,
/// including its own.
Adjacency build_temporal_full(std::size_t n);

}  // namespace agentprune
