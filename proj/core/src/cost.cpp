#include "agentprune/cost.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "agentprune/error.hpp"

namespace agentprune {

void validate(const CostParams& p) {
    const double fields[] = {p.rounds,         p.optimization_rounds, p.queries,      p.training_queries,
                             p.rollouts,       p.prune_ratio,         p.spatial_tokens, p.temporal_tokens,
                             p.query_tokens,   p.spatial_edges,       p.temporal_edges, p.agents};
    for (double f : fields) {
        if (!(f >= 0.0) || !std::isfinite(f)) throw Error(Errc::InvalidConfig, "cost parameters must be non-negative");
    }
    if (p.optimization_rounds > p.rounds) throw Error(Errc::InvalidConfig, "K' must not exceed K");
    if (p.training_queries > p.queries) throw Error(Errc::InvalidConfig, "Q' must not exceed Q");
    if (!(p.prune_ratio < 1.0)) throw Error(Errc::BadRatio, "prune ratio must lie in [0, 1)");
}

namespace {

double edge_term(const CostParams& p) { return p.spatial_tokens * p.spatial_edges + p.temporal_tokens * p.temporal_edges; }
double query_term(const CostParams& p) { return p.query_tokens * p.agents; }

}  // namespace

double vanilla_cost(const CostParams& p) {
    validate(p);
    return p.rounds * (edge_term(p) + query_term(p));
}

double agentprune_cost(const CostParams& p) {
    validate(p);
    const double stage_one = p.rollouts * p.optimization_rounds * (edge_term(p) + query_term(p));
    const double stage_two = (p.rounds - p.optimization_rounds) * ((1.0 - p.prune_ratio) * edge_term(p) + query_term(p));
    return stage_one + stage_two;
}

double delta_single_query(const CostParams& p) {
    validate(p);
    return ((1.0 + p.prune_ratio) * p.rounds - (p.rollouts + p.prune_ratio) * p.optimization_rounds) * edge_term(p) +
           (1.0 - p.rollouts) * p.optimization_rounds * query_term(p);
}

double vanilla_cost_multi(const CostParams& p) {
    validate(p);
    return p.queries * p.rounds * (edge_term(p) + query_term(p));
}

double agentprune_cost_multi(const CostParams& p) {
    validate(p);
    const double training = p.rollouts * p.training_queries * p.rounds * (edge_term(p) + query_term(p));
    const double rest =
        (p.queries - p.training_queries) * p.rounds * ((1.0 - p.prune_ratio) * edge_term(p) + query_term(p));
    return training + rest;
}

double delta_multi_query(const CostParams& p) {
    validate(p);
    return (p.prune_ratio * p.queries + (1.0 - p.prune_ratio - p.rollouts) * p.training_queries) * p.rounds *
               edge_term(p) +
           (1.0 - p.rollouts) * p.training_queries * p.rounds * query_term(p);
}

double token_cost(const TokenTotals& totals, const TokenPrices& prices) {
    return static_cast<double>(totals.prompt) * prices.prompt_per_million / 1e6 +
           static_cast<double>(totals.completion) * prices.completion_per_million / 1e6;
}

double percent_of_baseline(double before, double after) {
    if (!(before > 0.0)) throw Error(Errc::ZeroBaseline, "baseline must be positive");
    // Truncated, not rounded half-up: 745617 / 2736136 = 27.2506% is
    // reported as 27.2. The nudge absorbs representation error such as
    // 0.7 * 1000 = 699.999...
    return std::trunc(after / before * 1000.0 + 1e-9) / 10.0;
}

std::string format_percent(double percent) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", percent);
    return buf;
}

ReductionReport reduction_report(const TokenTotals& before, const TokenTotals& after,
                                 const std::optional<TokenPrices>& prices) {
    ReductionReport report;
    report.prompt_pct = percent_of_baseline(static_cast<double>(before.prompt), static_cast<double>(after.prompt));
    if (before.completion > 0) {
        report.completion_pct =
            percent_of_baseline(static_cast<double>(before.completion), static_cast<double>(after.completion));
    }
    report.total_pct = percent_of_baseline(static_cast<double>(before.total()), static_cast<double>(after.total()));
    if (prices) {
        report.cost_before = token_cost(before, *prices);
        report.cost_after = token_cost(after, *prices);
        if (*report.cost_before > 0.0) report.cost_pct = percent_of_baseline(*report.cost_before, *report.cost_after);
    }
    return report;
}

std::string reduction_csv(const std::vector<PhaseTotals>& phases, const std::optional<TokenPrices>& prices) {
    std::ostringstream out;
    out << "phase,prompt_tokens,completion_tokens,pct_of_baseline,cost\n";
    if (phases.empty()) return out.str();
    const auto baseline = static_cast<double>(phases.front().totals.prompt);
    for (const auto& row : phases) {
        out << row.phase << ',' << row.totals.prompt << ',' << row.totals.completion << ','
            << format_percent(percent_of_baseline(baseline, static_cast<double>(row.totals.prompt))) << ',';
        if (prices) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", token_cost(row.totals, *prices));
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

TokenLedger::TokenLedger(const TokenLedger& other) {
    std::lock_guard lock(other.mutex_);
    prompt_ = other.prompt_;
    delivered_ = other.delivered_;
    completion_ = other.completion_;
    running_ = other.running_;
}

TokenLedger& TokenLedger::operator=(const TokenLedger& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    prompt_ = other.prompt_;
    delivered_ = other.delivered_;
    completion_ = other.completion_;
    running_ = other.running_;
    return *this;
}

void TokenLedger::record_prompt(Edge edge, MessageKind kind, std::uint64_t tokens) {
    std::lock_guard lock(mutex_);
    prompt_[{edge, kind}] += tokens;
    delivered_[{edge, kind}] += 1;
    running_.prompt += tokens;
}

void TokenLedger::record_completion(NodeId agent, std::uint64_t tokens) {
    std::lock_guard lock(mutex_);
    completion_[agent] += tokens;
    running_.completion += tokens;
}

void TokenLedger::merge(const TokenLedger& other) {
    if (this == &other) return;
    std::scoped_lock lock(mutex_, other.mutex_);
    for (const auto& [key, v] : other.prompt_) prompt_[key] += v;
    for (const auto& [key, v] : other.delivered_) delivered_[key] += v;
    for (const auto& [key, v] : other.completion_) completion_[key] += v;
    running_.prompt += other.running_.prompt;
    running_.completion += other.running_.completion;
}

TokenTotals TokenLedger::totals() const {
    std::lock_guard lock(mutex_);
    return running_;
}

std::map<TokenLedger::PromptKey, std::uint64_t> TokenLedger::prompt_tallies() const {
    std::lock_guard lock(mutex_);
    return prompt_;
}

std::map<NodeId, std::uint64_t> TokenLedger::completion_tallies() const {
    std::lock_guard lock(mutex_);
    return completion_;
}

std::uint64_t TokenLedger::prompt_tokens(MessageKind kind) const {
    std::lock_guard lock(mutex_);
    std::uint64_t sum = 0;
    for (const auto& [key, v] : prompt_)
        if (key.second == kind) sum += v;
    return sum;
}

std::uint64_t TokenLedger::deliveries(MessageKind kind) const {
    std::lock_guard lock(mutex_);
    std::uint64_t sum = 0;
    for (const auto& [key, v] : delivered_)
        if (key.second == kind) sum += v;
    return sum;
}

bool TokenLedger::conserved() const {
    std::lock_guard lock(mutex_);
    std::uint64_t prompt = 0;
    std::uint64_t completion = 0;
    for (const auto& [key, v] : prompt_) prompt += v;
    for (const auto& [key, v] : completion_) completion += v;
    return prompt == running_.prompt && completion == running_.completion;
}

CostParams TokenLedger::with_measured_means(CostParams params) const {
    auto mean = [this](MessageKind kind) {
        const auto n = deliveries(kind);
        return n == 0 ? 0.0 : static_cast<double>(prompt_tokens(kind)) / static_cast<double>(n);
    };
    if (params.spatial_tokens == 0.0) params.spatial_tokens = mean(MessageKind::Spatial);
    if (params.temporal_tokens == 0.0) params.temporal_tokens = mean(MessageKind::Temporal);
    if (params.query_tokens == 0.0) params.query_tokens = mean(MessageKind::Query);
    return params;
}

std::string TokenLedger::to_csv() const {
    std::lock_guard lock(mutex_);
    std::ostringstream out;
    out << "record,src,dst,kind,deliveries,tokens\n";
    for (const auto& [key, v] : prompt_) {
        out << "prompt," << key.first.src << ',' << key.first.dst << ',' << to_string(key.second) << ','
            << delivered_.at(key) << ',' << v << '\n';
    }
    for (const auto& [agent, v] : completion_) out << "completion," << agent << ',' << agent << ",completion,," << v << '\n';
    out << "total,,,prompt,," << running_.prompt << '\n';
    out << "total,,,completion,," << running_.completion << '\n';
    return out.str();
}

}  // namespace agentprune
