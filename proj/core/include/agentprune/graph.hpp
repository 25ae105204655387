#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agentprune/message.hpp"
#include "agentprune/rng.hpp"

namespace agentprune {

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;

    auto operator<=>(const Edge&) const = default;
};

/// Dense square 0/1 matrix. Row = source, column = destination.
class Adjacency {
public:
    Adjacency() = default;
    explicit Adjacency(std::size_t n) : n_(n), bits_(n * n, 0) {}

    static Adjacency from_edges(std::size_t n, const std::vector<Edge>& edges);
    static Adjacency ones(std::size_t n);

    std::size_t size() const noexcept { return n_; }

    bool operator()(std::size_t src, std::size_t dst) const { return bits_[src * n_ + dst] != 0; }
    void set(std::size_t src, std::size_t dst, bool on = true) { bits_[src * n_ + dst] = on ? 1 : 0; }

    std::size_t edge_count() const;

    /// Edges in row-major (src, dst) order.
    std::vector<Edge> edges() const;

    bool contains(const Adjacency& other) const;
    Adjacency hadamard(const Adjacency& other) const;

    bool operator==(const Adjacency&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> bits_;
};

struct Plugin {
    std::string name;
    std::string config;

    bool operator==(const Plugin&) const = default;
};

/// One agent: backend reference, role, mutable state and tool plugins.
struct AgentNode {
    NodeId id = 0;
    std::string base;
    std::string role;
    std::map<std::string, std::string> state;
    std::vector<Plugin> plugins;

    bool operator==(const AgentNode&) const = default;
};

struct SpatialEdge {
    NodeId src = 0;
    NodeId dst = 0;
    std::optional<Message> message;
    std::optional<std::string> operation;
};

struct CommGraph {
    std::vector<AgentNode> nodes;
    Adjacency spatial;
    Adjacency temporal;

    std::size_t size() const noexcept { return nodes.size(); }

    bool operator==(const CommGraph&) const = default;
};

/// Builds a graph from node records and edge lists. Duplicate edges collapse.
/// Throws InvalidNodeId for out-of-range endpoints or non-sequential node ids,
/// SpatialSelfLoop for (v, v) in the spatial list.
CommGraph build_comm_graph(std::vector<AgentNode> nodes, const std::vector<Edge>& spatial_edges,
                           const std::vector<Edge>& temporal_edges);

std::vector<NodeId> spatial_in_neighbors(const CommGraph& g, NodeId v);
std::vector<NodeId> temporal_in_neighbors(const CommGraph& g, NodeId v);
std::vector<NodeId> in_neighbors(const Adjacency& adj, NodeId v);
std::vector<NodeId> out_neighbors(const Adjacency& adj, NodeId v);

/// Depth-first search with white/gray/black marking.
bool is_acyclic(const Adjacency& adj);

/// Edges of one directed cycle, chained head to tail. The DFS starts from
/// the lowest unvisited id and visits successors in ascending id order.
/// Throws NoCycle when the graph is acyclic.
std::vector<Edge> find_cycle(const Adjacency& adj);

struct DagSample {
    Adjacency dag;
    std::vector<Edge> removed;  // in removal order
};

/// Repeatedly locates a cycle and removes one of its edges chosen uniformly
/// at random until the graph is acyclic.
DagSample dag_sample_detailed(const Adjacency& adj, Rng& rng);
Adjacency dag_sample(const Adjacency& adj, Rng& rng);

/// Kahn ordering with ascending-id tie-break. Throws CyclicGraph.
std::vector<NodeId> topological_sort(const Adjacency& adj);

/// Longest-path depth of each node from the sources. Throws CyclicGraph.
std::vector<std::size_t> topological_depths(const Adjacency& adj);

std::string save_graph(const CommGraph& g);
CommGraph load_graph(const std::string& text);

std::string save_adjacency(const Adjacency& adj);
Adjacency load_adjacency(const std::string& text);

}  // namespace agentprune
