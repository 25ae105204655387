#include "agentprune/error.hpp"

namespace agentprune {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidNodeId: return "InvalidNodeId";
        case Errc::SpatialSelfLoop: return "SpatialSelfLoop";
        case Errc::NoCycle: return "NoCycle";
        case Errc::CyclicGraph: return "CyclicGraph";
        case Errc::TooFewAgents: return "TooFewAgents";
        case Errc::BadLayerSpec: return "BadLayerSpec";
        case Errc::OutOfRangeInit: return "OutOfRangeInit";
        case Errc::ZeroProbabilityEdge: return "ZeroProbabilityEdge";
        case Errc::EmptyRollouts: return "EmptyRollouts";
        case Errc::NonFiniteEntry: return "NonFiniteEntry";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::BadRatio: return "BadRatio";
        case Errc::BackendUnavailable: return "BackendUnavailable";
        case Errc::BackendTimeout: return "BackendTimeout";
        case Errc::MalformedBackendReply: return "MalformedBackendReply";
        case Errc::AuthFailure: return "AuthFailure";
        case Errc::EmptyMessages: return "EmptyMessages";
        case Errc::UtilityEvaluatorMissing: return "UtilityEvaluatorMissing";
        case Errc::ZeroBaseline: return "ZeroBaseline";
        case Errc::InsufficientQueries: return "InsufficientQueries";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::ParseError: return "ParseError";
    }
    return "Unknown";
}

}  // namespace agentprune
