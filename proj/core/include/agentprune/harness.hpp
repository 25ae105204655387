#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "agentprune/agents.hpp"
#include "agentprune/cost.hpp"
#include "agentprune/executor.hpp"
#include "agentprune/http_agent.hpp"
#include "agentprune/mask.hpp"
#include "agentprune/topology.hpp"

namespace agentprune {

enum class AttackMode { None, Prompt, Replacement };

std::string_view to_string(AttackMode mode) noexcept;
AttackMode attack_mode_from_string(std::string_view text);

struct AgentSpec {
    std::string backend = "scripted";  // "scripted" or "http"
    ScriptedBehavior behavior;
    std::string role = "knowledge_expert";
    std::optional<std::string> role_file;
    std::vector<Plugin> plugins;
};

struct SyntheticTaskConfig {
    std::size_t count = 100;
    std::uint64_t seed = 0;
    std::vector<std::string> choices{"A", "B", "C", "D"};
};

struct RedundancyProbeConfig {
    std::vector<double> ratios{0.0, 0.1, 0.2, 0.3};
    std::size_t trials = 10;
    double epsilon = 0.01;
};

void validate(const RedundancyProbeConfig& probe);

struct ExperimentConfig {
    TopologyKind topology;
    bool temporal = true;  // full temporal adjacency, or none
    std::vector<AgentSpec> agents;
    DialogueConfig dialogue;
    OptimizerConfig optimizer;
    std::optional<std::string> queries_path;
    SyntheticTaskConfig synthetic;
    std::size_t q_prime = 0;
    std::vector<std::uint64_t> seeds{0};
    AttackMode attack = AttackMode::None;
    std::optional<NodeId> attacked_agent;
    RedundancyProbeConfig probe;
    HttpEndpointConfig http;
    std::optional<TokenPrices> prices;
    std::string output_dir = "out";
    bool write_traces = true;
    std::size_t workers = 0;  // 0 = hardware concurrency
};

/// Throws InvalidConfig for structural problems (no agents, empty seed list,
/// ...) and InvalidNodeId for out-of-range summarizer or attacked ids.
void validate(const ExperimentConfig& cfg);

/// Nested key-value (JSON) form. Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& cfg);

/// Multiple-choice queries with uniformly drawn labels. How hard a task is
/// is set by the accuracy of the scripted agents answering it.
std::vector<Query> synthetic_queries(const SyntheticTaskConfig& cfg);

/// One record per line: {"id", "question", "label", "choices"}; id and
/// choices are optional.
std::vector<Query> parse_queries_jsonl(const std::string& text);
std::vector<Query> load_queries(const ExperimentConfig& cfg);
std::string queries_jsonl(const std::vector<Query>& queries);

CommGraph build_experiment_graph(const ExperimentConfig& cfg);

/// Team for one seed with the configured attack applied to `attacked`.
Team build_team(const ExperimentConfig& cfg, std::optional<NodeId> attacked, std::uint64_t seed);

/// The configured attacked agent, or one drawn uniformly by seed among the
/// agents other than the summarizer. Unset when the attack mode is none.
std::optional<NodeId> pick_attacked_agent(const ExperimentConfig& cfg, std::uint64_t seed);

struct QueryOutcome {
    std::string query_id;
    bool training = false;
    std::string answer;
    std::optional<std::string> label;
    bool correct = false;
};

struct Accuracy {
    double value = 0.0;
    std::size_t count = 0;
};

struct MultiQueryResult {
    std::uint64_t seed = 0;
    std::vector<QueryOutcome> outcomes;
    Accuracy train;
    Accuracy heldout;
    TokenLedger ledger;
    TokenTotals train_tokens;
    TokenTotals heldout_tokens;
    CommGraph gsub;
    EdgeMask mask;
    BinaryMask binary;
    Trace trace;
};

/// Optimizes the masks over the first Q' queries (every round of each
/// training query is an optimization round), prunes once, then answers the
/// remaining queries on G^sub. Throws InsufficientQueries.
MultiQueryResult run_multi_query(const ExperimentConfig& cfg, const std::vector<Query>& queries, std::uint64_t seed,
                                 std::optional<NodeId> attacked = std::nullopt);

/// Every query on the unpruned graph.
MultiQueryResult run_vanilla(const ExperimentConfig& cfg, const std::vector<Query>& queries, std::uint64_t seed,
                             std::optional<NodeId> attacked = std::nullopt);

struct ProbeRow {
    double ratio = 0.0;
    std::size_t trials = 0;
    std::size_t removed_spatial = 0;
    std::size_t removed_temporal = 0;
    double mean = 0.0;
    double stddev = 0.0;
    bool witness = false;
    std::vector<double> utilities;  // per trial
};

struct ProbeCurve {
    std::uint64_t seed = 0;
    std::size_t queries = 0;
    double unpruned_mean = 0.0;
    double epsilon = 0.0;
    std::vector<ProbeRow> rows;
};

/// Mean accuracy of the team over `queries` on g, K fixed rounds each.
double evaluate_utility(const ExperimentConfig& cfg, const CommGraph& g, const Team& team,
                        const std::vector<Query>& queries, std::uint64_t seed);

/// Removes floor(r * |E|) edges, drawn without replacement, from the
/// spatial and the temporal edge sets independently.
CommGraph remove_random_edges(const CommGraph& g, double ratio, Rng& rng);

/// For every ratio and trial, evaluates a randomly thinned graph. A ratio is
/// a witness when it removes at least one edge and its mean utility is at
/// least the unpruned mean minus epsilon.
ProbeCurve redundancy_probe(const ExperimentConfig& cfg, const std::vector<Query>& queries, std::uint64_t seed);

struct AttackSeedResult {
    std::uint64_t seed = 0;
    std::optional<NodeId> attacked;
    MultiQueryResult vanilla;
    MultiQueryResult pruned;
    std::size_t out_edges_before = 0;
    std::size_t out_edges_after = 0;
};

struct AttackSummary {
    AttackMode mode = AttackMode::None;
    std::vector<AttackSeedResult> runs;
    std::size_t pruned_not_worse = 0;  // seeds with pruned held-out acc >= vanilla
    std::size_t halved = 0;            // seeds pruning >= half the attacked agent's out-edges
};

/// Vanilla and AgentPrune arms on identical seeds and queries. Accuracy is
/// compared on the held-out queries (index >= Q').
AttackSummary attack_experiment(const ExperimentConfig& cfg, const std::vector<Query>& queries);

/// Spatial plus temporal out-degree.
std::size_t out_degree(const CommGraph& g, NodeId v);

struct CostSimulation {
    std::uint64_t vanilla = 0;
    std::uint64_t agentprune = 0;
};

/// Prompt tokens charged by actual dialogue runs under a constant token
/// model. Round 1 starts from a placeholder prior so temporal edges carry
/// traffic in every round. With Q = 1 the single-query schedule (K' rounds
/// x M rollouts, prune, K - K' rounds) runs; with Q > 1 the multi-query one.
/// Optimization rollouts use the full graph.
CostSimulation simulate_cost(const CommGraph& g, const TokenCostModel& costs, int rounds, int optimization_rounds,
                             std::size_t rollouts, double prune_ratio, std::size_t queries,
                             std::size_t training_queries);

/// Mask checkpoint: exact mask values, the binary masks, and the config echo.
std::string mask_checkpoint_json(const EdgeMask& mask, const BinaryMask& binary, const std::string& config_json);

struct MaskCheckpoint {
    EdgeMask mask;
    BinaryMask binary;
    std::string config_json;
};

MaskCheckpoint parse_mask_checkpoint(const std::string& text);

/// Results document for the train verb: config echo and per-seed outcomes.
std::string multi_query_results_json(const ExperimentConfig& cfg, const std::vector<MultiQueryResult>& runs);
std::string accuracy_csv(const std::vector<MultiQueryResult>& runs);
std::string probe_csv(const ProbeCurve& curve);
std::string attack_results_json(const ExperimentConfig& cfg, const AttackSummary& summary);
std::string attack_csv(const AttackSummary& summary);

/// Calls fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace agentprune
