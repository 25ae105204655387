#include "agentprune/trace.hpp"

#include <sstream>

#include <json.hpp>

#include "agentprune/error.hpp"

namespace agentprune {

using json = nlohmann::json;

namespace {

json edges_json(const std::vector<Edge>& edges) {
    json out = json::array();
    for (const auto& e : edges) out.push_back({e.src, e.dst});
    return out;
}

std::vector<Edge> edges_from(const json& j) {
    std::vector<Edge> out;
    for (const auto& e : j) out.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
    return out;
}

}  // namespace

std::string_view to_string(TracePhase phase) noexcept { return phase == TracePhase::Optimize ? "optimize" : "fixed"; }

TracePhase trace_phase_from_string(std::string_view text) {
    if (text == "optimize") return TracePhase::Optimize;
    if (text == "fixed") return TracePhase::Fixed;
    throw Error(Errc::ParseError, "unknown trace phase '" + std::string(text) + "'");
}

void Trace::append(std::vector<TraceRecord> more) {
    records.insert(records.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

std::string Trace::to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
        json j;
        j["type"] = r.type;
        j["query"] = r.query_id;
        j["phase"] = to_string(r.phase);
        j["rollout"] = r.rollout;
        j["round"] = r.round;
        if (r.type == "message" || r.type == "plugin") {
            j["sender"] = r.sender;
            j["recipients"] = r.recipients;
            j["kind"] = to_string(r.kind);
            j["token_count"] = r.token_count;
            j["content"] = r.content;
        } else if (r.type == "structure" || r.type == "gsub") {
            j["spatial"] = edges_json(r.spatial_edges);
            j["temporal"] = edges_json(r.temporal_edges);
        } else if (r.type == "answer") {
            j["content"] = r.content;
            j["stop_round"] = r.stop_round ? json(*r.stop_round) : json(nullptr);
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

Trace Trace::from_jsonl(std::string_view text) {
    Trace trace;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            TraceRecord r;
            r.type = j.at("type").get<std::string>();
            r.query_id = j.value("query", "");
            r.phase = trace_phase_from_string(j.value("phase", "fixed"));
            r.rollout = j.value("rollout", 0);
            r.round = j.value("round", 0);
            if (r.type == "message" || r.type == "plugin") {
                r.sender = j.at("sender").get<NodeId>();
                r.recipients = j.at("recipients").get<std::vector<NodeId>>();
                r.kind = message_kind_from_string(j.at("kind").get<std::string>());
                r.token_count = j.at("token_count").get<std::size_t>();
                r.content = j.at("content").get<std::string>();
            } else if (r.type == "structure" || r.type == "gsub") {
                r.spatial_edges = edges_from(j.at("spatial"));
                r.temporal_edges = edges_from(j.at("temporal"));
            } else if (r.type == "answer") {
                r.content = j.at("content").get<std::string>();
                if (!j.at("stop_round").is_null()) r.stop_round = j["stop_round"].get<int>();
            } else {
                throw Error(Errc::ParseError, "unknown record type '" + r.type + "'");
            }
            trace.records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(Errc::ParseError, "trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return trace;
}

}  // namespace agentprune
