#include "agentprune/graph.hpp"

#include <algorithm>
#include <queue>

#include <json.hpp>

#include "agentprune/error.hpp"

namespace agentprune {

using json = nlohmann::json;

namespace {

void check_node(std::size_t n, NodeId v) {
    if (v < 0 || static_cast<std::size_t>(v) >= n) {
        throw Error(Errc::InvalidNodeId, "node " + std::to_string(v) + " outside [0, " + std::to_string(n) + ")");
    }
}

enum class Color : std::uint8_t { White, Gray, Black };

// Returns true when a back edge is found; `cycle` then holds its edges.
bool dfs_cycle(const Adjacency& adj, std::size_t u, std::vector<Color>& color, std::vector<std::size_t>& stack,
               std::vector<Edge>& cycle) {
    color[u] = Color::Gray;
    stack.push_back(u);
    for (std::size_t v = 0; v < adj.size(); ++v) {
        if (!adj(u, v)) continue;
        if (color[v] == Color::Gray) {
            auto it = std::find(stack.begin(), stack.end(), v);
            for (auto cur = it; cur + 1 != stack.end(); ++cur) {
                cycle.push_back({static_cast<NodeId>(*cur), static_cast<NodeId>(*(cur + 1))});
            }
            cycle.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
            return true;
        }
        if (color[v] == Color::White && dfs_cycle(adj, v, color, stack, cycle)) return true;
    }
    stack.pop_back();
    color[u] = Color::Black;
    return false;
}

}  // namespace

Adjacency Adjacency::from_edges(std::size_t n, const std::vector<Edge>& edges) {
    Adjacency adj(n);
    for (const auto& e : edges) {
        check_node(n, e.src);
        check_node(n, e.dst);
        adj.set(e.src, e.dst);
    }
    return adj;
}

Adjacency Adjacency::ones(std::size_t n) {
    Adjacency adj(n);
    std::fill(adj.bits_.begin(), adj.bits_.end(), std::uint8_t{1});
    return adj;
}

std::size_t Adjacency::edge_count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<Edge> Adjacency::edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j)
            if ((*this)(i, j)) out.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    return out;
}

bool Adjacency::contains(const Adjacency& other) const {
    if (other.n_ != n_) return false;
    for (std::size_t k = 0; k < bits_.size(); ++k)
        if (other.bits_[k] && !bits_[k]) return false;
    return true;
}

Adjacency Adjacency::hadamard(const Adjacency& other) const {
    if (other.n_ != n_) throw Error(Errc::ShapeMismatch, "adjacency sizes differ");
    Adjacency out(n_);
    for (std::size_t k = 0; k < bits_.size(); ++k) out.bits_[k] = bits_[k] & other.bits_[k];
    return out;
}

CommGraph build_comm_graph(std::vector<AgentNode> nodes, const std::vector<Edge>& spatial_edges,
                           const std::vector<Edge>& temporal_edges) {
    const std::size_t n = nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (nodes[i].id != static_cast<NodeId>(i)) {
            throw Error(Errc::InvalidNodeId, "node ids must be 0..|V|-1 in order; found " +
                                                 std::to_string(nodes[i].id) + " at position " + std::to_string(i));
        }
        for (const auto& p : nodes[i].plugins) {
            if (p.name.empty()) throw Error(Errc::InvalidConfig, "plugin name must be non-empty");
        }
    }
    for (const auto& e : spatial_edges) {
        check_node(n, e.src);
        check_node(n, e.dst);
        if (e.src == e.dst) throw Error(Errc::SpatialSelfLoop, "spatial edge (" + std::to_string(e.src) + ", " +
                                                                   std::to_string(e.dst) + ")");
    }
    CommGraph g;
    g.spatial = Adjacency::from_edges(n, spatial_edges);
    g.temporal = Adjacency::from_edges(n, temporal_edges);
    g.nodes = std::move(nodes);
    return g;
}

std::vector<NodeId> in_neighbors(const Adjacency& adj, NodeId v) {
    check_node(adj.size(), v);
    std::vector<NodeId> out;
    for (std::size_t j = 0; j < adj.size(); ++j)
        if (adj(j, v)) out.push_back(static_cast<NodeId>(j));
    return out;
}

std::vector<NodeId> out_neighbors(const Adjacency& adj, NodeId v) {
    check_node(adj.size(), v);
    std::vector<NodeId> out;
    for (std::size_t j = 0; j < adj.size(); ++j)
        if (adj(v, j)) out.push_back(static_cast<NodeId>(j));
    return out;
}

std::vector<NodeId> spatial_in_neighbors(const CommGraph& g, NodeId v) { return in_neighbors(g.spatial, v); }
std::vector<NodeId> temporal_in_neighbors(const CommGraph& g, NodeId v) { return in_neighbors(g.temporal, v); }

bool is_acyclic(const Adjacency& adj) {
    std::vector<Color> color(adj.size(), Color::White);
    std::vector<std::size_t> stack;
    std::vector<Edge> cycle;
    for (std::size_t u = 0; u < adj.size(); ++u) {
        if (color[u] == Color::White && dfs_cycle(adj, u, color, stack, cycle)) return false;
    }
    return true;
}

std::vector<Edge> find_cycle(const Adjacency& adj) {
    std::vector<Color> color(adj.size(), Color::White);
    std::vector<std::size_t> stack;
    std::vector<Edge> cycle;
    for (std::size_t u = 0; u < adj.size(); ++u) {
        if (color[u] == Color::White && dfs_cycle(adj, u, color, stack, cycle)) return cycle;
    }
    throw Error(Errc::NoCycle, "graph is acyclic");
}

DagSample dag_sample_detailed(const Adjacency& adj, Rng& rng) {
    DagSample out{adj, {}};
    while (!is_acyclic(out.dag)) {
        const auto cycle = find_cycle(out.dag);
        const Edge victim = cycle[rng.index(cycle.size())];
        out.dag.set(victim.src, victim.dst, false);
        out.removed.push_back(victim);
    }
    return out;
}

Adjacency dag_sample(const Adjacency& adj, Rng& rng) { return dag_sample_detailed(adj, rng).dag; }

std::vector<NodeId> topological_sort(const Adjacency& adj) {
    const std::size_t n = adj.size();
    std::vector<std::size_t> indegree(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (adj(i, j)) ++indegree[j];

    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t v = 0; v < n; ++v)
        if (indegree[v] == 0) ready.push(v);

    std::vector<NodeId> order;
    order.reserve(n);
    while (!ready.empty()) {
        const std::size_t u = ready.top();
        ready.pop();
        order.push_back(static_cast<NodeId>(u));
        for (std::size_t v = 0; v < n; ++v) {
            if (adj(u, v) && --indegree[v] == 0) ready.push(v);
        }
    }
    if (order.size() != n) throw Error(Errc::CyclicGraph, "spatial graph contains a cycle");
    return order;
}

std::vector<std::size_t> topological_depths(const Adjacency& adj) {
    const auto order = topological_sort(adj);
    std::vector<std::size_t> depth(adj.size(), 0);
    for (NodeId u : order) {
        for (std::size_t v = 0; v < adj.size(); ++v) {
            if (adj(u, v)) depth[v] = std::max(depth[v], depth[u] + 1);
        }
    }
    return depth;
}

namespace {

json edges_to_json(const Adjacency& adj) {
    json arr = json::array();
    for (const auto& e : adj.edges()) arr.push_back({e.src, e.dst});
    return arr;
}

std::vector<Edge> edges_from_json(const json& arr) {
    std::vector<Edge> out;
    for (const auto& e : arr) out.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
    return out;
}

}  // namespace

std::string save_graph(const CommGraph& g) {
    json doc;
    doc["format"] = "agentprune.graph/1";
    json nodes = json::array();
    for (const auto& node : g.nodes) {
        json plugins = json::array();
        for (const auto& p : node.plugins) plugins.push_back({{"name", p.name}, {"config", p.config}});
        nodes.push_back({{"id", node.id},
                         {"base", node.base},
                         {"role", node.role},
                         {"state", node.state},
                         {"plugins", std::move(plugins)}});
    }
    doc["nodes"] = std::move(nodes);
    doc["spatial_edges"] = edges_to_json(g.spatial);
    doc["temporal_edges"] = edges_to_json(g.temporal);
    return doc.dump(2) + "\n";
}

CommGraph load_graph(const std::string& text) {
    try {
        const json doc = json::parse(text);
        std::vector<AgentNode> nodes;
        for (const auto& rec : doc.at("nodes")) {
            AgentNode node;
            node.id = rec.at("id").get<NodeId>();
            node.base = rec.value("base", "");
            node.role = rec.value("role", "");
            if (rec.contains("state")) node.state = rec.at("state").get<std::map<std::string, std::string>>();
            if (rec.contains("plugins")) {
                for (const auto& p : rec.at("plugins"))
                    node.plugins.push_back({p.at("name").get<std::string>(), p.value("config", "")});
            }
            nodes.push_back(std::move(node));
        }
        return build_comm_graph(std::move(nodes), edges_from_json(doc.at("spatial_edges")),
                                edges_from_json(doc.at("temporal_edges")));
    } catch (const json::exception& e) {
        throw Error(Errc::ParseError, std::string("graph document: ") + e.what());
    }
}

std::string save_adjacency(const Adjacency& adj) {
    json doc{{"n", adj.size()}, {"edges", edges_to_json(adj)}};
    return doc.dump();
}

Adjacency load_adjacency(const std::string& text) {
    try {
        const json doc = json::parse(text);
        return Adjacency::from_edges(doc.at("n").get<std::size_t>(), edges_from_json(doc.at("edges")));
    } catch (const json::exception& e) {
        throw Error(Errc::ParseError, std::string("adjacency document: ") + e.what());
    }
}

}  // namespace agentprune
