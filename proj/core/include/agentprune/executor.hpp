#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agentprune/agents.hpp"
#include "agentprune/cost.hpp"
#include "agentprune/graph.hpp"
#include "agentprune/mask.hpp"
#include "agentprune/pruner.hpp"
#include "agentprune/trace.hpp"

namespace agentprune {

enum class Aggregation { MajorityVote, Summarizer };

std::string_view to_string(Aggregation a) noexcept;
Aggregation aggregation_from_string(std::string_view text);

struct DialogueConfig {
    int rounds = 1;               // K
    int optimization_rounds = 1;  // K'
    double prune_ratio = 0.0;     // p
    Aggregation aggregation = Aggregation::Summarizer;
    /// Agent whose reply is the answer under Aggregation::Summarizer. Unset
    /// means the last agent in topological order.
    std::optional<NodeId> summarizer;
    /// Stop once every agent's normalized answer in a round is identical.
    bool consensus_stop = false;
    /// Run same-depth agents and independent rollouts on worker threads.
    bool parallel = false;
};

/// Throws InvalidConfig unless 1 <= K' <= K, BadRatio unless 0 <= p < 1.
void validate(const DialogueConfig& cfg);

/// Fixed per-delivery token charges. When supplied, the ledger is charged
/// these constants instead of tokenizer counts.
struct TokenCostModel {
    std::uint64_t spatial = 0;
    std::uint64_t temporal = 0;
    std::uint64_t query = 0;
    std::uint64_t completion = 0;
};

struct RoundState {
    int round_index = 0;
    std::map<NodeId, Message> prior_messages;    // outputs of round t-1
    std::map<Edge, Message> spatial_messages;    // deliveries within round t
};

/// Round-0 state in which every agent has already spoken `content`. Used to
/// exercise temporal edges in the first round.
RoundState placeholder_prior(std::size_t agents, const std::string& content);

struct RoundContext {
    int round = 1;
    /// Per-query stream seed. Agent streams are derived from (seed, round,
    /// agent), so rollouts of one round share agent randomness.
    std::uint64_t seed = 0;
    Aggregation aggregation = Aggregation::Summarizer;
    std::optional<NodeId> summarizer;
    TracePhase phase = TracePhase::Fixed;
    int rollout = 0;
    TokenLedger* ledger = nullptr;
    const TokenCostModel* costs = nullptr;
    bool parallel = false;
};

struct RoundResult {
    RoundState state;
    std::vector<Message> outputs;  // one per agent, in invocation order
    std::string answer;
    bool consensus = false;
    std::vector<TraceRecord> records;
};

/// Invokes one agent. The returned message has kind Answer, the current
/// round, and token_count set from the default tokenizer.
Message agent_respond(const Agent& agent, AgentNode& node, const Query& query, int round,
                      std::span<const Message> temporal, std::span<const Message> spatial, std::uint64_t seed,
                      std::size_t* completion_tokens = nullptr);

/// One dialogue round over g in topological order of g.spatial. Node state
/// in g is updated. Throws CyclicGraph, ShapeMismatch when the team size
/// differs from the graph, and whatever the backends throw.
RoundResult run_round(CommGraph& g, const Team& agents, const Query& query, const RoundState& prior,
                      const RoundContext& ctx);

/// Majority vote returns the most frequent normalized answer, ties going to
/// the answer whose earliest voter has the smallest id. Summarizer returns
/// the content of `summarizer`'s message verbatim, or of the last message
/// when unset. Throws EmptyMessages.
std::string aggregate_solution(std::span<const Message> messages, Aggregation strategy,
                               std::optional<NodeId> summarizer = std::nullopt);

/// All normalized answers identical.
bool consensus_reached(std::span<const Message> messages);

using UtilityFn = std::function<double(const Query&, const std::string& answer)>;

/// 1.0 when the normalized answer equals the normalized label, else 0.0.
double label_utility(const Query& query, const std::string& answer);

struct RunOptions {
    std::uint64_t seed = 0;
    TokenLedger* ledger = nullptr;
    const TokenCostModel* costs = nullptr;
    /// When false, optimization rollouts run on the full graph and the masks
    /// are left untouched. Used for cost accounting.
    bool sample_structures = true;
};

struct PhaseResult {
    RoundState state;
    std::vector<std::string> round_answers;
    std::optional<int> stop_round;
    std::vector<double> last_utilities;  // per rollout, last optimized round
};

/// Rounds first..last with M sampled structures each; one optimizer step per
/// round. Rollout 0 carries node state and prior messages forward.
PhaseResult run_optimization_rounds(const DialogueConfig& cfg, CommGraph& g, const Team& agents, const Query& query,
                                    const OptimizerConfig& opt, const UtilityFn& utility, EdgeMask& mask,
                                    int first_round, int last_round, RoundState prior, const RunOptions& run,
                                    Trace* trace);

/// Rounds first..last on g unchanged.
PhaseResult run_fixed_rounds(const DialogueConfig& cfg, CommGraph& g, const Team& agents, const Query& query,
                             int first_round, int last_round, RoundState prior, const RunOptions& run, Trace* trace);

/// Binary masks applied to g, with any spatial cycle the support allowed
/// broken by dag_sample.
CommGraph prune_graph(const CommGraph& g, const EdgeMask& mask, double prune_ratio, std::uint64_t seed,
                      BinaryMask* binary = nullptr);

struct DialogueResult {
    std::string answer;
    std::vector<std::string> round_answers;
    int rounds_run = 0;
    std::optional<int> stop_round;
    Trace trace;
    CommGraph pruned;
    EdgeMask mask;
    BinaryMask binary;
};

struct DialogueOptions {
    std::uint64_t seed = 0;
    std::optional<RoundState> initial_prior;
    std::optional<EdgeMask> mask;  // starting masks; default init_masks(g, opt.init_value)
    TokenLedger* ledger = nullptr;
    const TokenCostModel* costs = nullptr;
    bool sample_structures = true;
};

/// K' optimization rounds, one-shot prune, then K - K' rounds on G^sub.
/// Throws UtilityEvaluatorMissing when `utility` is empty.
DialogueResult run_dialogue(const DialogueConfig& cfg, const CommGraph& g, const Team& agents, const Query& query,
                            const OptimizerConfig& opt, const UtilityFn& utility, const DialogueOptions& options = {});

}  // namespace agentprune
