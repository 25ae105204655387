#include "agentprune/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "agentprune/error.hpp"
#include "agentprune/pruner.hpp"

namespace agentprune {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kAttackPick = 0xa77ac4ULL;
constexpr std::uint64_t kProbeStream = 0x9b0beULL;
constexpr std::uint64_t kReplacementStream = 0x4e91aceULL;

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(Errc::InvalidConfig, where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error(Errc::InvalidConfig, "unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::InvalidConfig, "cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

AgentSpec parse_agent(const json& j, AgentSpec spec, const std::string& where) {
    check_keys(j, {"backend", "behavior", "answer", "accuracy", "self_accuracy", "seed", "role", "role_file", "plugins"},
               where);
    read(j, "backend", spec.backend);
    if (j.contains("behavior")) spec.behavior.tag = scripted_tag_from_string(j["behavior"].get<std::string>());
    read(j, "answer", spec.behavior.answer);
    read(j, "accuracy", spec.behavior.accuracy);
    if (j.contains("self_accuracy")) {
        if (j["self_accuracy"].is_null()) {
            spec.behavior.self_accuracy.reset();
        } else {
            spec.behavior.self_accuracy = j["self_accuracy"].get<double>();
        }
    }
    read(j, "seed", spec.behavior.seed);
    read(j, "role", spec.role);
    if (j.contains("role_file")) spec.role_file = j["role_file"].get<std::string>();
    if (j.contains("plugins")) {
        spec.plugins.clear();
        for (const auto& p : j["plugins"]) spec.plugins.push_back({p.at("name").get<std::string>(), p.value("config", "")});
    }
    if (spec.backend != "scripted" && spec.backend != "http") {
        throw Error(Errc::InvalidConfig, where + ": backend must be 'scripted' or 'http'");
    }
    spec.behavior.validate();
    return spec;
}

json agent_json(const AgentSpec& a) {
    json j;
    j["backend"] = a.backend;
    j["behavior"] = to_string(a.behavior.tag);
    j["answer"] = a.behavior.answer;
    j["accuracy"] = a.behavior.accuracy;
    j["self_accuracy"] = a.behavior.self_accuracy ? json(*a.behavior.self_accuracy) : json(nullptr);
    j["seed"] = a.behavior.seed;
    j["role"] = a.role;
    if (a.role_file) j["role_file"] = *a.role_file;
    j["plugins"] = json::array();
    for (const auto& p : a.plugins) j["plugins"].push_back({{"name", p.name}, {"config", p.config}});
    return j;
}

json edges_json(const Adjacency& adj) {
    json out = json::array();
    for (const auto& e : adj.edges()) out.push_back({e.src, e.dst});
    return out;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from(const json& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = rows.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != n) throw Error(Errc::ShapeMismatch, "mask must be square");
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

Adjacency adjacency_from_edges(std::size_t n, const json& edges) {
    std::vector<Edge> list;
    for (const auto& e : edges) list.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
    return Adjacency::from_edges(n, list);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// The spatial graph actually executed: cycles broken deterministically.
CommGraph executable(const CommGraph& g, std::uint64_t seed) {
    if (is_acyclic(g.spatial)) return g;
    CommGraph out = g;
    Rng rng(derive_seed(seed, {0xac1c1eULL}));
    out.spatial = dag_sample(g.spatial, rng);
    return out;
}

std::uint64_t query_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, {index}); }

Accuracy accuracy_of(const std::vector<QueryOutcome>& outcomes, bool training) {
    Accuracy acc;
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
        if (o.training != training) continue;
        ++acc.count;
        correct += o.correct ? 1 : 0;
    }
    acc.value = acc.count ? static_cast<double>(correct) / static_cast<double>(acc.count) : 0.0;
    return acc;
}

DialogueConfig resolved_dialogue(const ExperimentConfig& cfg) {
    DialogueConfig d = cfg.dialogue;
    if (d.aggregation == Aggregation::Summarizer && !d.summarizer) {
        d.summarizer = terminal_node(cfg.topology, cfg.agents.size());
    }
    return d;
}

json accuracy_json(const Accuracy& a) { return {{"accuracy", a.value}, {"count", a.count}}; }

json totals_json(const TokenTotals& t) { return {{"prompt", t.prompt}, {"completion", t.completion}}; }

json outcomes_json(const std::vector<QueryOutcome>& outcomes) {
    json out = json::array();
    for (const auto& o : outcomes) {
        out.push_back({{"id", o.query_id},
                       {"training", o.training},
                       {"answer", o.answer},
                       {"label", o.label ? json(*o.label) : json(nullptr)},
                       {"correct", o.correct}});
    }
    return out;
}

json seeds_json(const std::vector<std::uint64_t>& seeds) { return json(seeds); }

}  // namespace

std::string_view to_string(AttackMode mode) noexcept {
    switch (mode) {
        case AttackMode::None: return "none";
        case AttackMode::Prompt: return "prompt";
        case AttackMode::Replacement: return "replacement";
    }
    return "none";
}

AttackMode attack_mode_from_string(std::string_view text) {
    for (auto m : {AttackMode::None, AttackMode::Prompt, AttackMode::Replacement})
        if (to_string(m) == text) return m;
    throw Error(Errc::InvalidConfig, "unknown attack mode '" + std::string(text) + "'");
}

void validate(const RedundancyProbeConfig& probe) {
    if (probe.trials < 1) throw Error(Errc::InvalidConfig, "probe trials must be >= 1");
    if (probe.ratios.empty()) throw Error(Errc::InvalidConfig, "probe needs at least one ratio");
    for (double r : probe.ratios)
        if (!(r >= 0.0 && r < 1.0)) throw Error(Errc::BadRatio, "probe ratios must lie in [0, 1)");
    if (!(probe.epsilon >= 0.0)) throw Error(Errc::InvalidConfig, "epsilon must be non-negative");
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.agents.empty()) throw Error(Errc::TooFewAgents, "no agents configured");
    if (cfg.seeds.empty()) throw Error(Errc::InvalidConfig, "seed list is empty");
    validate(cfg.dialogue);
    validate(cfg.optimizer);
    validate(cfg.probe);
    const auto n = static_cast<NodeId>(cfg.agents.size());
    if (cfg.dialogue.summarizer && (*cfg.dialogue.summarizer < 0 || *cfg.dialogue.summarizer >= n)) {
        throw Error(Errc::InvalidNodeId, "summarizer id out of range");
    }
    if (cfg.attacked_agent && (*cfg.attacked_agent < 0 || *cfg.attacked_agent >= n)) {
        throw Error(Errc::InvalidNodeId, "attacked agent id out of range");
    }
    for (const auto& a : cfg.agents) a.behavior.validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    ExperimentConfig cfg;
    try {
        check_keys(root, {"topology", "temporal", "agents", "agent_count", "agent_defaults", "agent_overrides",
                          "dialogue", "optimizer", "queries", "q_prime", "seeds", "attack", "probe", "http", "prices",
                          "output_dir", "write_traces", "workers"},
                   "config");

        if (root.contains("topology")) {
            const auto& t = root["topology"];
            check_keys(t, {"kind", "layers", "edge_probability", "seed"}, "topology");
            if (t.contains("kind")) cfg.topology.tag = topology_tag_from_string(t["kind"].get<std::string>());
            read(t, "layers", cfg.topology.layer_widths);
            read(t, "edge_probability", cfg.topology.edge_probability);
            read(t, "seed", cfg.topology.seed);
        }
        if (root.contains("temporal")) {
            const auto mode = root["temporal"].get<std::string>();
            if (mode != "full" && mode != "none") throw Error(Errc::InvalidConfig, "temporal must be 'full' or 'none'");
            cfg.temporal = mode == "full";
        }

        if (root.contains("agents")) {
            for (std::size_t i = 0; i < root["agents"].size(); ++i) {
                cfg.agents.push_back(parse_agent(root["agents"][i], AgentSpec{}, "agents[" + std::to_string(i) + "]"));
            }
        } else if (root.contains("agent_count")) {
            AgentSpec defaults;
            if (root.contains("agent_defaults")) defaults = parse_agent(root["agent_defaults"], defaults, "agent_defaults");
            cfg.agents.assign(root["agent_count"].get<std::size_t>(), defaults);
        }
        if (root.contains("agent_overrides")) {
            for (const auto& [key, value] : root["agent_overrides"].items()) {
                const auto idx = static_cast<std::size_t>(std::stoul(key));
                if (idx >= cfg.agents.size()) throw Error(Errc::InvalidNodeId, "agent override " + key + " out of range");
                cfg.agents[idx] = parse_agent(value, cfg.agents[idx], "agent_overrides." + key);
            }
        }

        if (root.contains("dialogue")) {
            const auto& d = root["dialogue"];
            check_keys(d, {"rounds", "optimization_rounds", "prune_ratio", "aggregation", "summarizer",
                           "consensus_stop", "parallel"},
                       "dialogue");
            read(d, "rounds", cfg.dialogue.rounds);
            read(d, "optimization_rounds", cfg.dialogue.optimization_rounds);
            read(d, "prune_ratio", cfg.dialogue.prune_ratio);
            if (d.contains("aggregation")) cfg.dialogue.aggregation = aggregation_from_string(d["aggregation"].get<std::string>());
            if (d.contains("summarizer") && !d["summarizer"].is_null()) cfg.dialogue.summarizer = d["summarizer"].get<NodeId>();
            read(d, "consensus_stop", cfg.dialogue.consensus_stop);
            read(d, "parallel", cfg.dialogue.parallel);
        }

        if (root.contains("optimizer")) {
            const auto& o = root["optimizer"];
            check_keys(o, {"learning_rate", "rollouts", "lambda_nuclear", "delta", "likelihood", "baseline",
                           "init_value", "clamp_lo", "clamp_hi", "seed"},
                       "optimizer");
            read(o, "learning_rate", cfg.optimizer.learning_rate);
            read(o, "rollouts", cfg.optimizer.rollouts);
            read(o, "lambda_nuclear", cfg.optimizer.lambda_nuclear);
            if (o.contains("delta") && !o["delta"].is_null()) cfg.optimizer.delta = o["delta"].get<double>();
            if (o.contains("likelihood")) cfg.optimizer.likelihood = likelihood_mode_from_string(o["likelihood"].get<std::string>());
            if (o.contains("baseline")) cfg.optimizer.baseline = baseline_mode_from_string(o["baseline"].get<std::string>());
            read(o, "init_value", cfg.optimizer.init_value);
            read(o, "clamp_lo", cfg.optimizer.clamp_lo);
            read(o, "clamp_hi", cfg.optimizer.clamp_hi);
            read(o, "seed", cfg.optimizer.seed);
        }

        if (root.contains("queries")) {
            const auto& q = root["queries"];
            check_keys(q, {"path", "synthetic"}, "queries");
            if (q.contains("path")) cfg.queries_path = q["path"].get<std::string>();
            if (q.contains("synthetic")) {
                const auto& s = q["synthetic"];
                check_keys(s, {"count", "seed", "choices"}, "queries.synthetic");
                read(s, "count", cfg.synthetic.count);
                read(s, "seed", cfg.synthetic.seed);
                read(s, "choices", cfg.synthetic.choices);
            }
        }
        read(root, "q_prime", cfg.q_prime);

        if (root.contains("seeds")) {
            const auto& s = root["seeds"];
            if (s.is_array()) {
                cfg.seeds = s.get<std::vector<std::uint64_t>>();
            } else {
                check_keys(s, {"first", "count"}, "seeds");
                const auto first = s.value("first", std::uint64_t{0});
                const auto count = s.at("count").get<std::uint64_t>();
                cfg.seeds.clear();
                for (std::uint64_t i = 0; i < count; ++i) cfg.seeds.push_back(first + i);
            }
        }

        if (root.contains("attack")) {
            const auto& a = root["attack"];
            check_keys(a, {"mode", "agent"}, "attack");
            if (a.contains("mode")) cfg.attack = attack_mode_from_string(a["mode"].get<std::string>());
            if (a.contains("agent") && !a["agent"].is_null()) cfg.attacked_agent = a["agent"].get<NodeId>();
        }

        if (root.contains("probe")) {
            const auto& p = root["probe"];
            check_keys(p, {"ratios", "trials", "epsilon"}, "probe");
            read(p, "ratios", cfg.probe.ratios);
            read(p, "trials", cfg.probe.trials);
            read(p, "epsilon", cfg.probe.epsilon);
        }

        if (root.contains("http")) {
            const auto& h = root["http"];
            check_keys(h, {"url", "path", "model", "temperature", "auth_header", "max_attempts", "initial_backoff_ms",
                           "backoff_multiplier", "max_backoff_ms", "timeout_ms", "max_in_flight"},
                       "http");
            read(h, "url", cfg.http.url);
            read(h, "path", cfg.http.path);
            read(h, "model", cfg.http.model);
            read(h, "temperature", cfg.http.temperature);
            read(h, "auth_header", cfg.http.auth_header);
            read(h, "max_attempts", cfg.http.max_attempts);
            if (h.contains("initial_backoff_ms")) cfg.http.initial_backoff = std::chrono::milliseconds(h["initial_backoff_ms"].get<std::int64_t>());
            read(h, "backoff_multiplier", cfg.http.backoff_multiplier);
            if (h.contains("max_backoff_ms")) cfg.http.max_backoff = std::chrono::milliseconds(h["max_backoff_ms"].get<std::int64_t>());
            if (h.contains("timeout_ms")) cfg.http.timeout = std::chrono::milliseconds(h["timeout_ms"].get<std::int64_t>());
            read(h, "max_in_flight", cfg.http.max_in_flight);
        }

        if (root.contains("prices")) {
            const auto& p = root["prices"];
            check_keys(p, {"prompt_per_million", "completion_per_million"}, "prices");
            TokenPrices prices;
            read(p, "prompt_per_million", prices.prompt_per_million);
            read(p, "completion_per_million", prices.completion_per_million);
            cfg.prices = prices;
        }
        read(root, "output_dir", cfg.output_dir);
        read(root, "write_traces", cfg.write_traces);
        read(root, "workers", cfg.workers);
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, e.what());
    }
    validate(cfg);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) { return parse_experiment_config(read_file(path)); }

std::string experiment_config_json(const ExperimentConfig& cfg) {
    json j;
    j["topology"] = {{"kind", to_string(cfg.topology.tag)},
                     {"layers", cfg.topology.layer_widths},
                     {"edge_probability", cfg.topology.edge_probability},
                     {"seed", cfg.topology.seed}};
    j["temporal"] = cfg.temporal ? "full" : "none";
    j["agents"] = json::array();
    for (const auto& a : cfg.agents) j["agents"].push_back(agent_json(a));
    const auto& d = cfg.dialogue;
    j["dialogue"] = {{"rounds", d.rounds},
                     {"optimization_rounds", d.optimization_rounds},
                     {"prune_ratio", d.prune_ratio},
                     {"aggregation", to_string(d.aggregation)},
                     {"summarizer", d.summarizer ? json(*d.summarizer) : json(nullptr)},
                     {"consensus_stop", d.consensus_stop},
                     {"parallel", d.parallel}};
    const auto& o = cfg.optimizer;
    j["optimizer"] = {{"learning_rate", o.learning_rate},
                      {"rollouts", o.rollouts},
                      {"lambda_nuclear", o.lambda_nuclear},
                      {"delta", o.delta ? json(*o.delta) : json(nullptr)},
                      {"likelihood", to_string(o.likelihood)},
                      {"baseline", to_string(o.baseline)},
                      {"init_value", o.init_value},
                      {"clamp_lo", o.clamp_lo},
                      {"clamp_hi", o.clamp_hi},
                      {"seed", o.seed}};
    json queries;
    if (cfg.queries_path) queries["path"] = *cfg.queries_path;
    queries["synthetic"] = {{"count", cfg.synthetic.count}, {"seed", cfg.synthetic.seed}, {"choices", cfg.synthetic.choices}};
    j["queries"] = queries;
    j["q_prime"] = cfg.q_prime;
    j["seeds"] = cfg.seeds;
    j["attack"] = {{"mode", to_string(cfg.attack)},
                   {"agent", cfg.attacked_agent ? json(*cfg.attacked_agent) : json(nullptr)}};
    j["probe"] = {{"ratios", cfg.probe.ratios}, {"trials", cfg.probe.trials}, {"epsilon", cfg.probe.epsilon}};
    // The credential is deliberately not echoed.
    j["http"] = {{"url", cfg.http.url},
                 {"path", cfg.http.path},
                 {"model", cfg.http.model},
                 {"temperature", cfg.http.temperature},
                 {"auth_header", cfg.http.auth_header},
                 {"max_attempts", cfg.http.max_attempts},
                 {"initial_backoff_ms", cfg.http.initial_backoff.count()},
                 {"backoff_multiplier", cfg.http.backoff_multiplier},
                 {"max_backoff_ms", cfg.http.max_backoff.count()},
                 {"timeout_ms", cfg.http.timeout.count()},
                 {"max_in_flight", cfg.http.max_in_flight}};
    if (cfg.prices) {
        j["prices"] = {{"prompt_per_million", cfg.prices->prompt_per_million},
                       {"completion_per_million", cfg.prices->completion_per_million}};
    }
    j["output_dir"] = cfg.output_dir;
    j["write_traces"] = cfg.write_traces;
    j["workers"] = cfg.workers;
    return j.dump(2);
}

std::vector<Query> synthetic_queries(const SyntheticTaskConfig& cfg) {
    if (cfg.choices.size() < 2) throw Error(Errc::InvalidConfig, "synthetic tasks need at least two choices");
    Rng rng(derive_seed(cfg.seed, {0x5e7ULL}));
    std::vector<Query> out;
    out.reserve(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "syn-%04zu", i);
        Query q;
        q.id = id;
        q.choices = cfg.choices;
        q.label = cfg.choices[rng.index(cfg.choices.size())];
        q.text = "Synthetic item " + std::to_string(i) + ": which option is correct?";
        for (const auto& c : cfg.choices) q.text += " (" + c + ")";
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<Query> parse_queries_jsonl(const std::string& text) {
    std::vector<Query> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            check_keys(j, {"id", "question", "label", "choices"}, "query line " + std::to_string(lineno));
            Query q;
            q.id = j.value("id", "q" + std::to_string(out.size()));
            q.text = j.at("question").get<std::string>();
            if (j.contains("label") && !j["label"].is_null()) q.label = j["label"].get<std::string>();
            if (j.contains("choices")) q.choices = j["choices"].get<std::vector<std::string>>();
            out.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw Error(Errc::ParseError, "query line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Query> load_queries(const ExperimentConfig& cfg) {
    if (cfg.queries_path) return parse_queries_jsonl(read_file(*cfg.queries_path));
    return synthetic_queries(cfg.synthetic);
}

std::string queries_jsonl(const std::vector<Query>& queries) {
    std::string out;
    for (const auto& q : queries) {
        json j{{"id", q.id}, {"question", q.text}, {"choices", q.choices}};
        j["label"] = q.label ? json(*q.label) : json(nullptr);
        out += j.dump() + "\n";
    }
    return out;
}

CommGraph build_experiment_graph(const ExperimentConfig& cfg) {
    const std::size_t n = cfg.agents.size();
    const Adjacency spatial = build_spatial(cfg.topology, n);
    const Adjacency temporal = cfg.temporal ? build_temporal_full(n) : Adjacency(n);
    std::vector<AgentNode> nodes;
    for (std::size_t i = 0; i < n; ++i) {
        AgentNode node;
        node.id = static_cast<NodeId>(i);
        node.base = cfg.agents[i].backend == "http" ? "http:" + cfg.http.model : "scripted";
        node.role = cfg.agents[i].role;
        node.plugins = cfg.agents[i].plugins;
        nodes.push_back(std::move(node));
    }
    return build_comm_graph(std::move(nodes), spatial.edges(), temporal.edges());
}

Team build_team(const ExperimentConfig& cfg, std::optional<NodeId> attacked, std::uint64_t seed) {
    std::shared_ptr<const ChatClient> client;
    Team team;
    for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
        const auto& spec = cfg.agents[i];
        RoleProfile role = spec.role_file ? load_role_file(*spec.role_file) : builtin_role(spec.role);
        if (spec.backend == "http") {
            if (!client) client = std::make_shared<ChatClient>(with_env_auth(cfg.http));
            team.push_back(std::make_shared<HttpChatAgent>(client, std::move(role)));
        } else {
            team.push_back(std::make_shared<ScriptedAgent>(spec.behavior, std::move(role)));
        }
    }
    if (attacked && cfg.attack != AttackMode::None) {
        auto& victim = team.at(static_cast<std::size_t>(*attacked));
        if (cfg.attack == AttackMode::Prompt) {
            victim = wrap_prompt_attack(victim);
        } else {
            Rng rng(derive_seed(seed, {kReplacementStream}));
            victim = wrap_replacement_attack(victim, rng);
        }
    }
    return team;
}

std::optional<NodeId> pick_attacked_agent(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.attack == AttackMode::None) return std::nullopt;
    if (cfg.attacked_agent) return cfg.attacked_agent;
    const auto d = resolved_dialogue(cfg);
    std::vector<NodeId> pool;
    for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
        const auto id = static_cast<NodeId>(i);
        if (d.aggregation == Aggregation::Summarizer && d.summarizer == id) continue;
        pool.push_back(id);
    }
    if (pool.empty()) throw Error(Errc::TooFewAgents, "no agent other than the summarizer to attack");
    Rng rng(derive_seed(seed, {kAttackPick}));
    return pool[rng.index(pool.size())];
}

MultiQueryResult run_multi_query(const ExperimentConfig& cfg, const std::vector<Query>& queries, std::uint64_t seed,
                                 std::optional<NodeId> attacked) {
    validate(cfg);
    if (cfg.q_prime > queries.size()) {
        throw Error(Errc::InsufficientQueries, "Q' = " + std::to_string(cfg.q_prime) + " exceeds the " +
                                                   std::to_string(queries.size()) + " available queries");
    }
    for (std::size_t i = 0; i < cfg.q_prime; ++i) {
        if (!queries[i].label) throw Error(Errc::InsufficientQueries, "training query '" + queries[i].id + "' has no label");
    }

    const DialogueConfig dialogue = resolved_dialogue(cfg);
    const CommGraph base = build_experiment_graph(cfg);
    const Team team = build_team(cfg, attacked, seed);

    MultiQueryResult result;
    result.seed = seed;
    result.mask = init_masks(base.spatial, base.temporal, cfg.optimizer.init_value, cfg.optimizer.clamp_lo,
                             cfg.optimizer.clamp_hi);
    OptimizerConfig opt = cfg.optimizer;
    opt.seed = seed;
    Trace* trace = cfg.write_traces ? &result.trace : nullptr;

    for (std::size_t i = 0; i < cfg.q_prime; ++i) {
        const Query& q = queries[i];
        TokenLedger ledger;
        const RunOptions run{query_seed(seed, i), &ledger, nullptr, true};
        CommGraph g = base;
        auto phase = run_optimization_rounds(dialogue, g, team, q, opt, label_utility, result.mask, 1,
                                             dialogue.rounds, RoundState{}, run, trace);
        const std::string& answer = phase.round_answers.back();
        result.outcomes.push_back({q.id, true, answer, q.label, label_utility(q, answer) > 0.5});
        const auto t = ledger.totals();
        result.train_tokens.prompt += t.prompt;
        result.train_tokens.completion += t.completion;
        result.ledger.merge(ledger);
    }

    result.gsub = prune_graph(base, result.mask, dialogue.prune_ratio, seed, &result.binary);
    if (trace) {
        TraceRecord r;
        r.type = "gsub";
        r.spatial_edges = result.gsub.spatial.edges();
        r.temporal_edges = result.gsub.temporal.edges();
        trace->records.push_back(std::move(r));
    }

    for (std::size_t i = cfg.q_prime; i < queries.size(); ++i) {
        const Query& q = queries[i];
        TokenLedger ledger;
        const RunOptions run{query_seed(seed, i), &ledger, nullptr, true};
        CommGraph g = result.gsub;
        auto phase = run_fixed_rounds(dialogue, g, team, q, 1, dialogue.rounds, RoundState{}, run, trace);
        const std::string& answer = phase.round_answers.back();
        result.outcomes.push_back({q.id, false, answer, q.label, label_utility(q, answer) > 0.5});
        const auto t = ledger.totals();
        result.heldout_tokens.prompt += t.prompt;
        result.heldout_tokens.completion += t.completion;
        result.ledger.merge(ledger);
    }

    result.train = accuracy_of(result.outcomes, true);
    result.heldout = accuracy_of(result.outcomes, false);
    return result;
}

MultiQueryResult run_vanilla(const ExperimentConfig& cfg, const std::vector<Query>& queries, std::uint64_t seed,
                             std::optional<NodeId> attacked) {
    validate(cfg);
    const DialogueConfig dialogue = resolved_dialogue(cfg);
    const CommGraph base = executable(build_experiment_graph(cfg), seed);
    const Team team = build_team(cfg, attacked, seed);

    MultiQueryResult result;
    result.seed = seed;
    result.gsub = base;
    result.mask = init_masks(base.spatial, base.temporal, cfg.optimizer.init_value, cfg.optimizer.clamp_lo,
                             cfg.optimizer.clamp_hi);
    result.binary = {base.spatial, base.temporal, 0.0};
    Trace* trace = cfg.write_traces ? &result.trace : nullptr;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const Query& q = queries[i];
        TokenLedger ledger;
        const RunOptions run{query_seed(seed, i), &ledger, nullptr, true};
        CommGraph g = base;
        auto phase = run_fixed_rounds(dialogue, g, team, q, 1, dialogue.rounds, RoundState{}, run, trace);
        const std::string& answer = phase.round_answers.back();
        // Queries before Q' are reported as training so that accuracy splits
        // line up with run_multi_query on the same query list.
        const bool training = i < cfg.q_prime;
        result.outcomes.push_back({q.id, training, answer, q.label, label_utility(q, answer) > 0.5});
        const auto t = ledger.totals();
        auto& bucket = training ? result.train_tokens : result.heldout_tokens;
        bucket.prompt += t.prompt;
        bucket.completion += t.completion;
        result.ledger.merge(ledger);
    }
    result.train = accuracy_of(result.outcomes, true);
    result.heldout = accuracy_of(result.outcomes, false);
    return result;
}

double evaluate_utility(const ExperimentConfig& cfg, const CommGraph& g, const Team& team,
                        const std::vector<Query>& queries, std::uint64_t seed) {
    if (queries.empty()) return 0.0;
    const DialogueConfig dialogue = resolved_dialogue(cfg);
    const CommGraph exec = executable(g, seed);
    double sum = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        CommGraph copy = exec;
        const RunOptions run{query_seed(seed, i), nullptr, nullptr, true};
        auto phase = run_fixed_rounds(dialogue, copy, team, queries[i], 1, dialogue.rounds, RoundState{}, run, nullptr);
        sum += label_utility(queries[i], phase.round_answers.back());
    }
    return sum / static_cast<double>(queries.size());
}

CommGraph remove_random_edges(const CommGraph& g, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw Error(Errc::BadRatio, "removal ratio must lie in [0, 1)");
    auto thin = [&](const Adjacency& adj) {
        auto edges = adj.edges();
        const auto drop = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(edges.size()) + 1e-9));
        // Partial Fisher-Yates: the first `drop` slots become the removed sample.
        for (std::size_t i = 0; i < drop; ++i) std::swap(edges[i], edges[i + rng.index(edges.size() - i)]);
        Adjacency out = adj;
        for (std::size_t i = 0; i < drop; ++i) out.set(edges[i].src, edges[i].dst, false);
        return out;
    };
    CommGraph out = g;
    out.spatial = thin(g.spatial);
    out.temporal = thin(g.temporal);
    return out;
}

ProbeCurve redundancy_probe(const ExperimentConfig& cfg, const std::vector<Query>& queries, std::uint64_t seed) {
    validate(cfg);
    const CommGraph base = build_experiment_graph(cfg);
    const Team team = build_team(cfg, pick_attacked_agent(cfg, seed), seed);

    ProbeCurve curve;
    curve.seed = seed;
    curve.queries = queries.size();
    curve.epsilon = cfg.probe.epsilon;
    curve.unpruned_mean = evaluate_utility(cfg, base, team, queries, seed);

    for (std::size_t r = 0; r < cfg.probe.ratios.size(); ++r) {
        ProbeRow row;
        row.ratio = cfg.probe.ratios[r];
        row.trials = cfg.probe.trials;
        row.utilities.assign(row.trials, 0.0);
        std::vector<CommGraph> thinned(row.trials);
        for (std::size_t k = 0; k < row.trials; ++k) {
            Rng rng(derive_seed(seed, {kProbeStream, r, k}));
            thinned[k] = remove_random_edges(base, row.ratio, rng);
        }
        row.removed_spatial = base.spatial.edge_count() - thinned[0].spatial.edge_count();
        row.removed_temporal = base.temporal.edge_count() - thinned[0].temporal.edge_count();
        parallel_for(row.trials, cfg.workers,
                     [&](std::size_t k) { row.utilities[k] = evaluate_utility(cfg, thinned[k], team, queries, seed); });
        const double n = static_cast<double>(row.trials);
        row.mean = std::accumulate(row.utilities.begin(), row.utilities.end(), 0.0) / n;
        double ss = 0.0;
        for (double u : row.utilities) ss += (u - row.mean) * (u - row.mean);
        row.stddev = row.trials > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        row.witness = (row.removed_spatial + row.removed_temporal) > 0 &&
                      row.mean >= curve.unpruned_mean - cfg.probe.epsilon;
        curve.rows.push_back(std::move(row));
    }
    return curve;
}

std::size_t out_degree(const CommGraph& g, NodeId v) {
    return out_neighbors(g.spatial, v).size() + out_neighbors(g.temporal, v).size();
}

AttackSummary attack_experiment(const ExperimentConfig& cfg, const std::vector<Query>& queries) {
    validate(cfg);
    AttackSummary summary;
    summary.mode = cfg.attack;
    summary.runs.resize(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
        AttackSeedResult& run = summary.runs[i];
        run.seed = cfg.seeds[i];
        run.attacked = pick_attacked_agent(cfg, run.seed);
        run.vanilla = run_vanilla(cfg, queries, run.seed, run.attacked);
        run.pruned = run_multi_query(cfg, queries, run.seed, run.attacked);
        if (run.attacked) {
            run.out_edges_before = out_degree(build_experiment_graph(cfg), *run.attacked);
            run.out_edges_after = out_degree(run.pruned.gsub, *run.attacked);
        }
    });
    for (const auto& run : summary.runs) {
        if (run.pruned.heldout.value >= run.vanilla.heldout.value) ++summary.pruned_not_worse;
        if (run.attacked && 2 * (run.out_edges_before - run.out_edges_after) >= run.out_edges_before) ++summary.halved;
    }
    return summary;
}

CostSimulation simulate_cost(const CommGraph& g, const TokenCostModel& costs, int rounds, int optimization_rounds,
                             std::size_t rollouts, double prune_ratio, std::size_t queries,
                             std::size_t training_queries) {
    if (queries < 1 || training_queries > queries) throw Error(Errc::InvalidConfig, "need 1 <= Q and Q' <= Q");
    const std::size_t n = g.size();
    ScriptedBehavior echo;
    echo.tag = ScriptedTag::Echo;
    Team team(n, std::make_shared<ScriptedAgent>(echo));
    const Query q{"cost", "placeholder question", std::nullopt};
    DialogueConfig dialogue;
    dialogue.rounds = rounds;
    dialogue.optimization_rounds = queries == 1 ? optimization_rounds : rounds;
    dialogue.prune_ratio = prune_ratio;
    dialogue.aggregation = Aggregation::Summarizer;
    OptimizerConfig opt;
    opt.rollouts = rollouts;
    const UtilityFn zero = [](const Query&, const std::string&) { return 0.0; };
    const RoundState prior = placeholder_prior(n, "placeholder");

    CostSimulation sim;
    TokenLedger vanilla;
    for (std::size_t i = 0; i < queries; ++i) {
        CommGraph copy = g;
        run_fixed_rounds(dialogue, copy, team, q, 1, rounds, prior, {i, &vanilla, &costs, false}, nullptr);
    }
    sim.vanilla = vanilla.totals().prompt;

    TokenLedger pruned;
    if (queries == 1) {
        DialogueOptions options;
        options.initial_prior = prior;
        options.ledger = &pruned;
        options.costs = &costs;
        options.sample_structures = false;
        run_dialogue(dialogue, g, team, q, opt, zero, options);
    } else {
        EdgeMask mask = init_masks(g.spatial, g.temporal, opt.init_value);
        for (std::size_t i = 0; i < training_queries; ++i) {
            CommGraph copy = g;
            run_optimization_rounds(dialogue, copy, team, q, opt, zero, mask, 1, rounds, prior,
                                    {i, &pruned, &costs, false}, nullptr);
        }
        const CommGraph gsub = prune_graph(g, mask, prune_ratio, 0);
        for (std::size_t i = training_queries; i < queries; ++i) {
            CommGraph copy = gsub;
            run_fixed_rounds(dialogue, copy, team, q, 1, rounds, prior, {i, &pruned, &costs, false}, nullptr);
        }
    }
    sim.agentprune = pruned.totals().prompt;
    return sim;
}

std::string mask_checkpoint_json(const EdgeMask& mask, const BinaryMask& binary, const std::string& config_json) {
    json j;
    j["format"] = "agentprune.mask/1";
    j["size"] = mask.spatial.rows();
    j["clamp"] = {mask.clamp_lo, mask.clamp_hi};
    j["spatial"] = matrix_json(mask.spatial);
    j["temporal"] = matrix_json(mask.temporal);
    j["spatial_support"] = edges_json(mask.spatial_support);
    j["temporal_support"] = edges_json(mask.temporal_support);
    j["binary"] = {{"prune_ratio", binary.prune_ratio},
                   {"spatial", edges_json(binary.spatial)},
                   {"temporal", edges_json(binary.temporal)}};
    j["config"] = config_json.empty() ? json(nullptr) : json::parse(config_json);
    return j.dump(2);
}

MaskCheckpoint parse_mask_checkpoint(const std::string& text) {
    MaskCheckpoint cp;
    try {
        const json j = json::parse(text);
        if (j.at("format") != "agentprune.mask/1") throw Error(Errc::ParseError, "not a mask checkpoint");
        const auto n = j.at("size").get<std::size_t>();
        cp.mask.clamp_lo = j.at("clamp").at(0).get<double>();
        cp.mask.clamp_hi = j.at("clamp").at(1).get<double>();
        cp.mask.spatial = matrix_from(j.at("spatial"));
        cp.mask.temporal = matrix_from(j.at("temporal"));
        cp.mask.spatial_support = adjacency_from_edges(n, j.at("spatial_support"));
        cp.mask.temporal_support = adjacency_from_edges(n, j.at("temporal_support"));
        cp.binary.prune_ratio = j.at("binary").at("prune_ratio").get<double>();
        cp.binary.spatial = adjacency_from_edges(n, j.at("binary").at("spatial"));
        cp.binary.temporal = adjacency_from_edges(n, j.at("binary").at("temporal"));
        if (!j.at("config").is_null()) cp.config_json = j["config"].dump(2);
        if (static_cast<std::size_t>(cp.mask.spatial.rows()) != n ||
            static_cast<std::size_t>(cp.mask.temporal.rows()) != n) {
            throw Error(Errc::ShapeMismatch, "mask size disagrees with header");
        }
    } catch (const json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    return cp;
}

std::string multi_query_results_json(const ExperimentConfig& cfg, const std::vector<MultiQueryResult>& runs) {
    json j;
    j["format"] = "agentprune.results/1";
    j["config"] = json::parse(experiment_config_json(cfg));
    j["seeds"] = seeds_json(cfg.seeds);
    j["runs"] = json::array();
    for (const auto& r : runs) {
        json run;
        run["seed"] = r.seed;
        run["train"] = accuracy_json(r.train);
        run["heldout"] = accuracy_json(r.heldout);
        run["tokens"] = {{"train", totals_json(r.train_tokens)},
                         {"heldout", totals_json(r.heldout_tokens)},
                         {"total", totals_json(r.ledger.totals())}};
        if (cfg.prices) run["cost"] = token_cost(r.ledger.totals(), *cfg.prices);
        run["gsub"] = {{"spatial", edges_json(r.gsub.spatial)}, {"temporal", edges_json(r.gsub.temporal)}};
        run["queries"] = outcomes_json(r.outcomes);
        j["runs"].push_back(std::move(run));
    }
    return j.dump(2) + "\n";
}

std::string accuracy_csv(const std::vector<MultiQueryResult>& runs) {
    std::ostringstream out;
    out << "seed,train_accuracy,train_count,heldout_accuracy,heldout_count,prompt_tokens,completion_tokens\n";
    for (const auto& r : runs) {
        const auto t = r.ledger.totals();
        out << r.seed << ',' << fmt_double(r.train.value) << ',' << r.train.count << ',' << fmt_double(r.heldout.value)
            << ',' << r.heldout.count << ',' << t.prompt << ',' << t.completion << '\n';
    }
    return out.str();
}

std::string probe_csv(const ProbeCurve& curve) {
    std::ostringstream out;
    out << "seed,ratio,trials,removed_spatial,removed_temporal,mean_utility,stddev,unpruned_mean,epsilon,witness\n";
    for (const auto& row : curve.rows) {
        out << curve.seed << ',' << fmt_double(row.ratio) << ',' << row.trials << ',' << row.removed_spatial << ','
            << row.removed_temporal << ',' << fmt_double(row.mean) << ',' << fmt_double(row.stddev) << ','
            << fmt_double(curve.unpruned_mean) << ',' << fmt_double(curve.epsilon) << ','
            << (row.witness ? "yes" : "no") << '\n';
    }
    return out.str();
}

std::string attack_results_json(const ExperimentConfig& cfg, const AttackSummary& summary) {
    json j;
    j["format"] = "agentprune.attack/1";
    j["config"] = json::parse(experiment_config_json(cfg));
    j["mode"] = to_string(summary.mode);
    j["seeds"] = seeds_json(cfg.seeds);
    j["pruned_not_worse"] = summary.pruned_not_worse;
    j["halved"] = summary.halved;
    j["runs"] = json::array();
    for (const auto& r : summary.runs) {
        j["runs"].push_back({{"seed", r.seed},
                             {"attacked", r.attacked ? json(*r.attacked) : json(nullptr)},
                             {"vanilla", {{"heldout", accuracy_json(r.vanilla.heldout)},
                                          {"tokens", totals_json(r.vanilla.ledger.totals())},
                                          {"queries", outcomes_json(r.vanilla.outcomes)}}},
                             {"pruned", {{"train", accuracy_json(r.pruned.train)},
                                         {"heldout", accuracy_json(r.pruned.heldout)},
                                         {"tokens", totals_json(r.pruned.ledger.totals())},
                                         {"queries", outcomes_json(r.pruned.outcomes)}}},
                             {"out_edges_before", r.out_edges_before},
                             {"out_edges_after", r.out_edges_after}});
    }
    return j.dump(2) + "\n";
}

std::string attack_csv(const AttackSummary& summary) {
    std::ostringstream out;
    out << "seed,attacked,vanilla_heldout,pruned_heldout,heldout_count,delta,out_edges_before,out_edges_after\n";
    for (const auto& r : summary.runs) {
        out << r.seed << ',' << (r.attacked ? std::to_string(*r.attacked) : std::string()) << ','
            << fmt_double(r.vanilla.heldout.value) << ',' << fmt_double(r.pruned.heldout.value) << ','
            << r.pruned.heldout.count << ',' << fmt_double(r.pruned.heldout.value - r.vanilla.heldout.value) << ','
            << r.out_edges_before << ',' << r.out_edges_after << '\n';
    }
    return out.str();
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace agentprune
