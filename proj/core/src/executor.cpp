#include "agentprune/executor.hpp"

#include <algorithm>
#include <future>
#include <utility>

#include "agentprune/error.hpp"

namespace agentprune {

namespace {

constexpr std::uint64_t kStructureStream = 0x5eed5eedULL;
constexpr std::uint64_t kPruneStream = 0xda9da9ULL;

std::uint64_t charge(const TokenCostModel* costs, MessageKind kind, std::size_t measured) {
    if (!costs) return measured;
    switch (kind) {
        case MessageKind::Spatial: return costs->spatial;
        case MessageKind::Temporal: return costs->temporal;
        case MessageKind::Query: return costs->query;
        case MessageKind::Answer: return costs->completion;
    }
    return measured;
}

TraceRecord delivery_record(const RoundContext& ctx, const Query& q, NodeId sender, NodeId recipient,
                            MessageKind kind, const std::string& content, std::size_t tokens) {
    TraceRecord r;
    r.query_id = q.id;
    r.phase = ctx.phase;
    r.rollout = ctx.rollout;
    r.round = ctx.round;
    r.sender = sender;
    r.recipients = {recipient};
    r.kind = kind;
    r.token_count = tokens;
    r.content = content;
    return r;
}

TraceRecord structure_record(const Query& q, TracePhase phase, int round, int rollout, const Adjacency& spatial,
                             const Adjacency& temporal, std::string type = "structure") {
    TraceRecord r;
    r.type = std::move(type);
    r.query_id = q.id;
    r.phase = phase;
    r.round = round;
    r.rollout = rollout;
    r.spatial_edges = spatial.edges();
    r.temporal_edges = temporal.edges();
    return r;
}

// Inputs gathered for one agent before it speaks.
struct Pending {
    NodeId id = 0;
    std::vector<Message> temporal;
    std::vector<Message> spatial;
    Message output;
    std::size_t completion = 0;
};

}  // namespace

std::string_view to_string(Aggregation a) noexcept {
    return a == Aggregation::MajorityVote ? "majority-vote" : "summarizer";
}

Aggregation aggregation_from_string(std::string_view text) {
    if (text == "majority-vote") return Aggregation::MajorityVote;
    if (text == "summarizer") return Aggregation::Summarizer;
    throw Error(Errc::InvalidConfig, "unknown aggregation '" + std::string(text) + "'");
}

void validate(const DialogueConfig& cfg) {
    if (cfg.optimization_rounds < 1 || cfg.optimization_rounds > cfg.rounds) {
        throw Error(Errc::InvalidConfig, "need 1 <= K' <= K");
    }
    if (!(cfg.prune_ratio >= 0.0 && cfg.prune_ratio < 1.0)) throw Error(Errc::BadRatio, "prune ratio must lie in [0, 1)");
}

RoundState placeholder_prior(std::size_t agents, const std::string& content) {
    RoundState state;
    for (std::size_t i = 0; i < agents; ++i) {
        Message m;
        m.round = 0;
        m.sender = static_cast<NodeId>(i);
        m.content = content;
        m.kind = MessageKind::Answer;
        m.token_count = default_tokenizer().count(content);
        state.prior_messages[m.sender] = m;
    }
    return state;
}

Message agent_respond(const Agent& agent, AgentNode& node, const Query& query, int round,
                      std::span<const Message> temporal, std::span<const Message> spatial, std::uint64_t seed,
                      std::size_t* completion_tokens) {
    const AgentContext ctx{query, round, node.id, node, temporal, spatial, seed};
    AgentReply reply = agent.respond(ctx);
    Message out;
    out.round = round;
    out.sender = node.id;
    out.content = std::move(reply.content);
    out.kind = MessageKind::Answer;
    out.token_count = default_tokenizer().count(out.content);
    if (completion_tokens) *completion_tokens = reply.completion_tokens.value_or(out.token_count);
    return out;
}

RoundResult run_round(CommGraph& g, const Team& agents, const Query& query, const RoundState& prior,
                      const RoundContext& ctx) {
    const std::size_t n = g.size();
    if (agents.size() != n) throw Error(Errc::ShapeMismatch, "team size differs from graph size");
    if (g.spatial.size() != n || g.temporal.size() != n) throw Error(Errc::ShapeMismatch, "adjacency size mismatch");

    const auto order = topological_sort(g.spatial);
    const auto depths = topological_depths(g.spatial);

    // Group the invocation order by depth. Agents of equal depth share no
    // spatial edge, so a group only reads outputs of earlier groups.
    std::vector<std::vector<NodeId>> groups;
    {
        std::size_t max_depth = 0;
        for (auto d : depths) max_depth = std::max(max_depth, d);
        groups.resize(max_depth + 1);
        for (NodeId v : order) groups[depths[v]].push_back(v);
    }

    RoundResult result;
    result.state.round_index = ctx.round;
    const std::size_t query_tokens = default_tokenizer().count(query.text);

    for (const auto& group : groups) {
        std::vector<Pending> pending;
        for (NodeId v : group) {
            Pending p;
            p.id = v;
            for (NodeId u : temporal_in_neighbors(g, v)) {
                auto it = prior.prior_messages.find(u);
                if (it == prior.prior_messages.end()) continue;
                Message m = it->second;
                m.kind = MessageKind::Temporal;
                m.round = ctx.round;
                m.recipients = {v};
                p.temporal.push_back(std::move(m));
            }
            for (NodeId u : spatial_in_neighbors(g, v)) p.spatial.push_back(result.state.spatial_messages.at({u, v}));
            pending.push_back(std::move(p));
        }

        auto speak = [&](Pending& p) {
            const std::uint64_t seed =
                derive_seed(ctx.seed, {static_cast<std::uint64_t>(ctx.round), static_cast<std::uint64_t>(p.id)});
            p.output = agent_respond(*agents[p.id], g.nodes[p.id], query, ctx.round, p.temporal, p.spatial, seed,
                                     &p.completion);
        };
        if (ctx.parallel && pending.size() > 1) {
            std::vector<std::future<void>> jobs;
            for (auto& p : pending) jobs.push_back(std::async(std::launch::async, speak, std::ref(p)));
            for (auto& j : jobs) j.get();
        } else {
            for (auto& p : pending) speak(p);
        }

        // Commit in invocation order so traces do not depend on scheduling.
        for (auto& p : pending) {
            const NodeId v = p.id;
            result.records.push_back(delivery_record(ctx, query, kUserNode, v, MessageKind::Query, query.text, query_tokens));
            if (ctx.ledger) ctx.ledger->record_prompt({kUserNode, v}, MessageKind::Query, charge(ctx.costs, MessageKind::Query, query_tokens));
            for (const auto& m : p.temporal) {
                result.records.push_back(delivery_record(ctx, query, m.sender, v, MessageKind::Temporal, m.content, m.token_count));
                if (ctx.ledger) ctx.ledger->record_prompt({m.sender, v}, MessageKind::Temporal, charge(ctx.costs, MessageKind::Temporal, m.token_count));
            }
            for (const auto& m : p.spatial) {
                result.records.push_back(delivery_record(ctx, query, m.sender, v, MessageKind::Spatial, m.content, m.token_count));
                if (ctx.ledger) ctx.ledger->record_prompt({m.sender, v}, MessageKind::Spatial, charge(ctx.costs, MessageKind::Spatial, m.token_count));
            }
            for (const auto& plugin : g.nodes[v].plugins) {
                TraceRecord r = delivery_record(ctx, query, v, v, MessageKind::Answer, plugin.name, 0);
                r.type = "plugin";
                result.records.push_back(std::move(r));
            }
            if (ctx.ledger) ctx.ledger->record_completion(v, charge(ctx.costs, MessageKind::Answer, p.completion));

            Message out = std::move(p.output);
            out.recipients = out_neighbors(g.spatial, v);
            TraceRecord own = delivery_record(ctx, query, v, v, MessageKind::Answer, out.content, out.token_count);
            own.recipients = out.recipients;
            result.records.push_back(std::move(own));

            for (NodeId w : out.recipients) {
                Message m = out;
                m.kind = MessageKind::Spatial;
                m.recipients = {w};
                result.state.spatial_messages[{v, w}] = std::move(m);
            }
            result.state.prior_messages[v] = out;
            result.outputs.push_back(std::move(out));
        }
    }

    result.answer = aggregate_solution(result.outputs, ctx.aggregation, ctx.summarizer);
    result.consensus = consensus_reached(result.outputs);
    return result;
}

std::string aggregate_solution(std::span<const Message> messages, Aggregation strategy,
                               std::optional<NodeId> summarizer) {
    if (messages.empty()) throw Error(Errc::EmptyMessages, "nothing to aggregate");
    if (strategy == Aggregation::Summarizer) {
        if (!summarizer) return messages.back().content;
        for (const auto& m : messages)
            if (m.sender == *summarizer) return m.content;
        throw Error(Errc::InvalidConfig, "summarizer agent " + std::to_string(*summarizer) + " produced no message");
    }
    struct Votes {
        std::size_t count = 0;
        NodeId earliest = 0;
    };
    std::map<std::string, Votes> votes;
    for (const auto& m : messages) {
        const auto answer = normalize_answer(m.content);
        auto [it, inserted] = votes.try_emplace(answer, Votes{0, m.sender});
        it->second.count += 1;
        it->second.earliest = std::min(it->second.earliest, m.sender);
    }
    const std::string* best = nullptr;
    Votes best_votes;
    for (const auto& [answer, v] : votes) {
        if (!best || v.count > best_votes.count || (v.count == best_votes.count && v.earliest < best_votes.earliest)) {
            best = &answer;
            best_votes = v;
        }
    }
    return *best;
}

bool consensus_reached(std::span<const Message> messages) {
    if (messages.empty()) return false;
    const auto first = normalize_answer(messages.front().content);
    return std::all_of(messages.begin(), messages.end(),
                       [&](const Message& m) { return normalize_answer(m.content) == first; });
}

double label_utility(const Query& query, const std::string& answer) {
    if (!query.label) return 0.0;
    return normalize_answer(answer) == normalize_answer(*query.label) ? 1.0 : 0.0;
}

PhaseResult run_optimization_rounds(const DialogueConfig& cfg, CommGraph& g, const Team& agents, const Query& query,
                                    const OptimizerConfig& opt, const UtilityFn& utility, EdgeMask& mask,
                                    int first_round, int last_round, RoundState prior, const RunOptions& run,
                                    Trace* trace) {
    if (!utility) throw Error(Errc::UtilityEvaluatorMissing, "optimization rounds need a utility evaluator");
    validate(opt);
    if (mask.spatial_support != g.spatial || mask.temporal_support != g.temporal) {
        throw Error(Errc::ShapeMismatch, "mask support differs from the graph");
    }

    PhaseResult out;
    const std::size_t m = opt.rollouts;
    for (int t = first_round; t <= last_round; ++t) {
        Rng rng(derive_seed(run.seed, {static_cast<std::uint64_t>(t), kStructureStream}));
        std::vector<Rollout> rollouts(m);
        for (auto& r : rollouts) {
            if (run.sample_structures) {
                r.structure = sample_structure(mask, rng);
            } else {
                r.structure.temporal = g.temporal;
                auto dag = dag_sample_detailed(g.spatial, rng);
                r.structure.spatial = std::move(dag.dag);
                r.structure.dag_removed = std::move(dag.removed);
            }
        }

        std::vector<CommGraph> graphs(m, g);
        std::vector<RoundResult> results(m);
        auto play = [&](std::size_t k) {
            graphs[k].spatial = rollouts[k].structure.spatial;
            graphs[k].temporal = rollouts[k].structure.temporal;
            RoundContext ctx;
            ctx.round = t;
            ctx.seed = run.seed;
            ctx.aggregation = cfg.aggregation;
            ctx.summarizer = cfg.summarizer;
            ctx.phase = TracePhase::Optimize;
            ctx.rollout = static_cast<int>(k);
            ctx.ledger = run.ledger;
            ctx.costs = run.costs;
            ctx.parallel = cfg.parallel;
            results[k] = run_round(graphs[k], agents, query, prior, ctx);
            rollouts[k].utility = utility(query, results[k].answer);
        };
        if (cfg.parallel && m > 1) {
            std::vector<std::future<void>> jobs;
            for (std::size_t k = 0; k < m; ++k) jobs.push_back(std::async(std::launch::async, play, k));
            for (auto& j : jobs) j.get();
        } else {
            for (std::size_t k = 0; k < m; ++k) play(k);
        }

        if (trace) {
            for (std::size_t k = 0; k < m; ++k) {
                trace->records.push_back(structure_record(query, TracePhase::Optimize, t, static_cast<int>(k),
                                                          rollouts[k].structure.spatial,
                                                          rollouts[k].structure.temporal));
                trace->append(std::move(results[k].records));
            }
        }

        if (run.sample_structures) {
            const auto grad = reinforce_gradient(mask, rollouts, opt.likelihood, opt.baseline);
            mask = optimizer_step(mask, grad, opt);
        }

        out.last_utilities.clear();
        for (const auto& r : rollouts) out.last_utilities.push_back(r.utility);
        g.nodes = std::move(graphs[0].nodes);
        prior = std::move(results[0].state);
        out.round_answers.push_back(results[0].answer);
        if (cfg.consensus_stop && results[0].consensus) {
            out.stop_round = t;
            break;
        }
    }
    out.state = std::move(prior);
    return out;
}

PhaseResult run_fixed_rounds(const DialogueConfig& cfg, CommGraph& g, const Team& agents, const Query& query,
                             int first_round, int last_round, RoundState prior, const RunOptions& run, Trace* trace) {
    PhaseResult out;
    for (int t = first_round; t <= last_round; ++t) {
        RoundContext ctx;
        ctx.round = t;
        ctx.seed = run.seed;
        ctx.aggregation = cfg.aggregation;
        ctx.summarizer = cfg.summarizer;
        ctx.phase = TracePhase::Fixed;
        ctx.ledger = run.ledger;
        ctx.costs = run.costs;
        ctx.parallel = cfg.parallel;
        RoundResult r = run_round(g, agents, query, prior, ctx);
        if (trace) trace->append(std::move(r.records));
        prior = std::move(r.state);
        out.round_answers.push_back(r.answer);
        if (cfg.consensus_stop && r.consensus) {
            out.stop_round = t;
            break;
        }
    }
    out.state = std::move(prior);
    return out;
}

CommGraph prune_graph(const CommGraph& g, const EdgeMask& mask, double prune_ratio, std::uint64_t seed,
                      BinaryMask* binary) {
    BinaryMask b = prune_masks(mask, prune_ratio);
    CommGraph pruned = apply_binary_masks(g, b.spatial, b.temporal);
    if (!is_acyclic(pruned.spatial)) {
        Rng rng(derive_seed(seed, {kPruneStream}));
        pruned.spatial = dag_sample(pruned.spatial, rng);
    }
    if (binary) *binary = std::move(b);
    return pruned;
}

DialogueResult run_dialogue(const DialogueConfig& cfg, const CommGraph& g, const Team& agents, const Query& query,
                            const OptimizerConfig& opt, const UtilityFn& utility, const DialogueOptions& options) {
    validate(cfg);
    if (!utility) throw Error(Errc::UtilityEvaluatorMissing, "optimization rounds need a utility evaluator");

    DialogueResult result;
    result.mask = options.mask ? *options.mask
                               : init_masks(g.spatial, g.temporal, opt.init_value, opt.clamp_lo, opt.clamp_hi);
    const RunOptions run{options.seed, options.ledger, options.costs, options.sample_structures};

    CommGraph working = g;
    RoundState prior = options.initial_prior.value_or(RoundState{});
    PhaseResult phase1 = run_optimization_rounds(cfg, working, agents, query, opt, utility, result.mask, 1,
                                                 cfg.optimization_rounds, std::move(prior), run, &result.trace);
    result.round_answers = phase1.round_answers;
    result.stop_round = phase1.stop_round;

    result.pruned = prune_graph(working, result.mask, cfg.prune_ratio, options.seed, &result.binary);
    result.trace.records.push_back(
        structure_record(query, TracePhase::Fixed, cfg.optimization_rounds, 0, result.pruned.spatial,
                         result.pruned.temporal, "gsub"));

    if (!result.stop_round && cfg.rounds > cfg.optimization_rounds) {
        PhaseResult phase2 = run_fixed_rounds(cfg, result.pruned, agents, query, cfg.optimization_rounds + 1,
                                              cfg.rounds, std::move(phase1.state), run, &result.trace);
        result.round_answers.insert(result.round_answers.end(), phase2.round_answers.begin(),
                                    phase2.round_answers.end());
        result.stop_round = phase2.stop_round;
    }
    result.rounds_run = static_cast<int>(result.round_answers.size());
    result.answer = result.round_answers.back();

    TraceRecord final;
    final.type = "answer";
    final.query_id = query.id;
    final.round = result.rounds_run;
    final.content = result.answer;
    final.stop_round = result.stop_round;
    result.trace.records.push_back(std::move(final));
    return result;
}

}  // namespace agentprune
