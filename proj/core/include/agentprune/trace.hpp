#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentprune/graph.hpp"
#include "agentprune/message.hpp"

namespace agentprune {

enum class TracePhase { Optimize, Fixed };

std::string_view to_string(TracePhase phase) noexcept;
TracePhase trace_phase_from_string(std::string_view text);

/// One line of a dialogue trace.
///
///   message    one delivery (query, spatial, temporal) or an agent's own
///              output (kind answer, recipients = spatial out-neighbors)
///   structure  the sampled spatial/temporal edge sets of one rollout
///   plugin     a stubbed plugin call made by `sender`
///   answer     final answer of a dialogue
///   gsub       the pruned graph's edge sets
struct TraceRecord {
    std::string type = "message";
    std::string query_id;
    TracePhase phase = TracePhase::Fixed;
    int rollout = 0;
    int round = 0;
    NodeId sender = kUserNode;
    std::vector<NodeId> recipients;
    MessageKind kind = MessageKind::Answer;
    std::size_t token_count = 0;
    std::string content;
    std::vector<Edge> spatial_edges;
    std::vector<Edge> temporal_edges;
    std::optional<int> stop_round;

    bool operator==(const TraceRecord&) const = default;
};

struct Trace {
    std::vector<TraceRecord> records;

    void append(std::vector<TraceRecord> more);
    std::string to_jsonl() const;
    static Trace from_jsonl(std::string_view text);

    bool operator==(const Trace&) const = default;
};

}  // namespace agentprune
