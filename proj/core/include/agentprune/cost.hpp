#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agentprune/graph.hpp"
#include "agentprune/message.hpp"

namespace agentprune {

/// Inputs of the closed-form token model. Counts are reals so the formulas
/// can take measured averages for the per-message token sizes.
struct CostParams {
    double rounds = 0;               // K
    double optimization_rounds = 0;  // K'
    double queries = 0;              // Q
    double training_queries = 0;     // Q'
    double rollouts = 1;             // M
    double prune_ratio = 0;          // p
    double spatial_tokens = 0;       // c_S
    double temporal_tokens = 0;      // c_T
    double query_tokens = 0;         // c_q
    double spatial_edges = 0;        // |E^S|
    double temporal_edges = 0;       // |E^T|
    double agents = 0;               // |V|
};

void validate(const CostParams& params);

/// Prompt tokens of one vanilla query: K (c_S |E^S| + c_T |E^T| + c_q |V|).
double vanilla_cost(const CostParams& params);

/// Prompt tokens of one query under the prune schedule:
/// M K' [edges + queries] + (K - K') [(1 - p) edges + queries].
double agentprune_cost(const CostParams& params);

/// Closed-form single-query savings as published:
/// ((1+p)K - (M+p)K')(c_S|E^S| + c_T|E^T|) + (1-M) K' c_q |V|.
/// This exceeds vanilla_cost - agentprune_cost by (K - K') times the edge
/// term; the two agree only when K' = K.
double delta_single_query(const CostParams& params);

/// Q-query versions of the two costs above with Q' training queries.
double vanilla_cost_multi(const CostParams& params);
double agentprune_cost_multi(const CostParams& params);

/// (p Q + (1-p-M) Q') K (c_S|E^S| + c_T|E^T|) + (1-M) Q' K c_q |V|.
double delta_multi_query(const CostParams& params);

struct TokenTotals {
    std::uint64_t prompt = 0;
    std::uint64_t completion = 0;

    std::uint64_t total() const noexcept { return prompt + completion; }
    bool operator==(const TokenTotals&) const = default;
};

/// USD per million tokens.
struct TokenPrices {
    double prompt_per_million = 0.0;
    double completion_per_million = 0.0;
};

double token_cost(const TokenTotals& totals, const TokenPrices& prices);

/// after / before as a percentage truncated to one decimal. Throws ZeroBaseline.
double percent_of_baseline(double before, double after);

/// Fixed one-decimal rendering, e.g. "71.9".
std::string format_percent(double percent);

struct ReductionReport {
    double prompt_pct = 0.0;
    double completion_pct = 0.0;
    double total_pct = 0.0;
    std::optional<double> cost_before;
    std::optional<double> cost_after;
    std::optional<double> cost_pct;
};

/// Percent-of-baseline per category. Throws ZeroBaseline when the baseline
/// prompt count is zero; completion and cost percentages are skipped (set to
/// 0 / unset) when their own baseline is zero.
ReductionReport reduction_report(const TokenTotals& before, const TokenTotals& after,
                                 const std::optional<TokenPrices>& prices = std::nullopt);

struct PhaseTotals {
    std::string phase;
    TokenTotals totals;
};

/// CSV with columns phase,prompt_tokens,completion_tokens,pct_of_baseline,cost.
/// The first row is the baseline for pct_of_baseline (prompt tokens).
std::string reduction_csv(const std::vector<PhaseTotals>& phases, const std::optional<TokenPrices>& prices);

/// Thread-safe per-run token accounting.
///
/// Prompt tokens are tallied per (edge, kind) where the edge is the
/// (sender, receiver) pair of a delivered message; query deliveries use the
/// (kUserNode, agent) pair. Completion tokens are tallied per agent.
class TokenLedger {
public:
    using PromptKey = std::pair<Edge, MessageKind>;

    TokenLedger() = default;
    TokenLedger(const TokenLedger& other);
    TokenLedger& operator=(const TokenLedger& other);

    void record_prompt(Edge edge, MessageKind kind, std::uint64_t tokens);
    void record_completion(NodeId agent, std::uint64_t tokens);
    void merge(const TokenLedger& other);

    TokenTotals totals() const;
    std::map<PromptKey, std::uint64_t> prompt_tallies() const;
    std::map<NodeId, std::uint64_t> completion_tallies() const;

    /// Prompt tokens and delivery count for one message kind.
    std::uint64_t prompt_tokens(MessageKind kind) const;
    std::uint64_t deliveries(MessageKind kind) const;

    /// Running totals equal the sum of the tallies.
    bool conserved() const;

    /// Fills c_S, c_T, c_q with empirical means where the input leaves them at 0.
    CostParams with_measured_means(CostParams params) const;

    std::string to_csv() const;

private:
    mutable std::mutex mutex_;
    std::map<PromptKey, std::uint64_t> prompt_;
    std::map<PromptKey, std::uint64_t> delivered_;
    std::map<NodeId, std::uint64_t> completion_;
    TokenTotals running_;
};

}  // namespace agentprune
