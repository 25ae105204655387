#include "agentprune/agents.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "agentprune/error.hpp"

namespace agentprune {

namespace {

struct BundledRole {
    const char* name;
    const char* text;
};

constexpr BundledRole kBundledRoles[] = {
#include "roles_data.inc"
};

constexpr std::string_view kPlaceholders[] = {"question"};

std::vector<std::string> wrong_choices(const Query& q) {
    if (!q.label) throw Error(Errc::InvalidConfig, "query '" + q.id + "' has no label; scripted oracle needs one");
    const std::string truth = normalize_answer(*q.label);
    std::vector<std::string> wrong;
    bool found = false;
    for (const auto& c : q.choices) {
        if (normalize_answer(c) == truth) {
            found = true;
        } else {
            wrong.push_back(c);
        }
    }
    if (!found) throw Error(Errc::InvalidConfig, "label '" + *q.label + "' is not one of the query choices");
    if (wrong.empty()) throw Error(Errc::InvalidConfig, "query '" + q.id + "' has no wrong choice");
    return wrong;
}

std::string noisy_label(const Query& q, double accuracy, Rng& rng) {
    const auto wrong = wrong_choices(q);
    if (rng.uniform() < accuracy) return *q.label;
    return wrong[rng.index(wrong.size())];
}

std::string majority_vote(const Query& q, NodeId self, std::span<const Message> temporal,
                          std::span<const Message> spatial, const std::optional<double>& self_accuracy, Rng& rng) {
    struct Tally {
        std::size_t count = 0;
        NodeId first_sender = 0;
        bool own = false;
    };
    std::map<std::string, Tally> tallies;
    auto cast = [&](const std::string& answer, NodeId sender, bool own) {
        auto [it, inserted] = tallies.try_emplace(answer, Tally{0, sender, false});
        it->second.count += 1;
        it->second.first_sender = std::min(it->second.first_sender, sender);
        it->second.own = it->second.own || own;
    };
    for (const auto& m : temporal) cast(reply_answer(m), m.sender, false);
    for (const auto& m : spatial) cast(reply_answer(m), m.sender, false);
    if (self_accuracy) cast(normalize_answer(noisy_label(q, *self_accuracy, rng)), self, true);

    if (tallies.empty()) return q.text;

    std::size_t best = 0;
    for (const auto& [answer, t] : tallies) best = std::max(best, t.count);
    const std::string* winner = nullptr;
    NodeId winner_sender = 0;
    for (const auto& [answer, t] : tallies) {
        if (t.count != best) continue;
        if (t.own) {
            winner = &answer;
            break;
        }
        if (!winner || t.first_sender < winner_sender) {
            winner = &answer;
            winner_sender = t.first_sender;
        }
    }
    return *winner;
}

class PromptAttackedAgent final : public Agent {
public:
    explicit PromptAttackedAgent(AgentPtr inner) : inner_(std::move(inner)), liar_(builtin_role("liar")) {}

    AgentReply respond(const AgentContext& ctx) const override {
        if (auto prompted = inner_->with_role(liar_)) return prompted->respond(ctx);
        Rng rng(derive_seed(ctx.seed, {0x11a5ULL}));
        const auto wrong = wrong_choices(ctx.query);
        const std::string& pick = wrong[rng.index(wrong.size())];
        AgentReply reply;
        reply.content = pick + "\nOption " + pick + " is plainly correct; the other agents have misread the question.";
        return reply;
    }

    const RoleProfile& role() const override { return liar_; }
    std::string describe() const override { return "prompt-attack(" + inner_->describe() + ")"; }

private:
    AgentPtr inner_;
    RoleProfile liar_;
};

class ReplacementAttackedAgent final : public Agent {
public:
    ReplacementAttackedAgent(AgentPtr inner, std::uint64_t seed)
        : inner_(std::move(inner)), seed_(seed), role_(builtin_role("gibberish")) {}

    AgentReply respond(const AgentContext& ctx) const override {
        static constexpr std::string_view kFiller[] = {"lorem",   "quasar", "teapot", "orbit",  "velvet",
                                                       "cascade", "pickle", "zenith", "marble", "tundra"};
        Rng rng(derive_seed(ctx.seed, {seed_}));
        AgentReply reply;
        reply.content = ctx.query.choices.at(rng.index(ctx.query.choices.size()));
        reply.content += "\n";
        for (int w = 0; w < 12; ++w) {
            if (w) reply.content += ' ';
            reply.content += kFiller[rng.index(std::size(kFiller))];
        }
        return reply;
    }

    const RoleProfile& role() const override { return role_; }
    std::string describe() const override { return "replacement-attack(" + inner_->describe() + ")"; }

private:
    AgentPtr inner_;
    std::uint64_t seed_;
    RoleProfile role_;
};

}  // namespace

void RoleProfile::validate() const {
    std::size_t pos = 0;
    while (pos < prompt_template.size()) {
        const char c = prompt_template[pos];
        if (c == '}') throw Error(Errc::InvalidConfig, "role '" + name + "': unmatched '}'");
        if (c != '{') {
            ++pos;
            continue;
        }
        const auto close = prompt_template.find('}', pos);
        if (close == std::string::npos) throw Error(Errc::InvalidConfig, "role '" + name + "': unterminated '{'");
        const std::string_view key(prompt_template.data() + pos + 1, close - pos - 1);
        if (std::find(std::begin(kPlaceholders), std::end(kPlaceholders), key) == std::end(kPlaceholders)) {
            throw Error(Errc::InvalidConfig, "role '" + name + "': unknown placeholder {" + std::string(key) + "}");
        }
        pos = close + 1;
    }
}

std::string RoleProfile::render(std::string_view question) const {
    validate();
    std::string out;
    std::size_t pos = 0;
    while (pos < prompt_template.size()) {
        const auto open = prompt_template.find('{', pos);
        if (open == std::string::npos) {
            out.append(prompt_template, pos);
            break;
        }
        out.append(prompt_template, pos, open - pos);
        out.append(question);
        pos = prompt_template.find('}', open) + 1;
    }
    return out;
}

const RoleProfile& builtin_role(std::string_view name) {
    static const std::vector<RoleProfile> roles = [] {
        std::vector<RoleProfile> out;
        for (const auto& r : kBundledRoles) out.push_back({r.name, r.text});
        return out;
    }();
    for (const auto& r : roles)
        if (r.name == name) return r;
    throw Error(Errc::InvalidConfig, "no bundled role named '" + std::string(name) + "'");
}

std::vector<std::string> builtin_role_names() {
    std::vector<std::string> out;
    for (const auto& r : kBundledRoles) out.emplace_back(r.name);
    return out;
}

RoleProfile load_role_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot read role file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    std::string name = path.substr(path.find_last_of('/') + 1);
    name = name.substr(0, name.find('.'));
    RoleProfile role{name, text.str()};
    role.validate();
    return role;
}

std::string_view to_string(ScriptedTag tag) noexcept {
    switch (tag) {
        case ScriptedTag::Echo: return "echo";
        case ScriptedTag::AppendId: return "append-id";
        case ScriptedTag::FixedAnswer: return "fixed-answer";
        case ScriptedTag::MajorityOfInputs: return "majority-of-inputs";
        case ScriptedTag::NoisyOracle: return "noisy-oracle";
    }
    return "echo";
}

ScriptedTag scripted_tag_from_string(std::string_view text) {
    for (auto tag : {ScriptedTag::Echo, ScriptedTag::AppendId, ScriptedTag::FixedAnswer, ScriptedTag::MajorityOfInputs,
                     ScriptedTag::NoisyOracle}) {
        if (to_string(tag) == text) return tag;
    }
    throw Error(Errc::InvalidConfig, "unknown scripted behavior '" + std::string(text) + "'");
}

void ScriptedBehavior::validate() const {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw Error(Errc::InvalidConfig, "accuracy must lie in [0, 1]");
    if (self_accuracy && !(*self_accuracy >= 0.0 && *self_accuracy <= 1.0)) {
        throw Error(Errc::InvalidConfig, "self_accuracy must lie in [0, 1]");
    }
}

std::string scripted_respond(const ScriptedBehavior& behavior, const Query& query, NodeId self,
                             std::span<const Message> temporal, std::span<const Message> spatial, Rng& rng) {
    switch (behavior.tag) {
        case ScriptedTag::Echo:
            return query.text;
        case ScriptedTag::AppendId: {
            const Message* last = nullptr;
            for (const auto& m : spatial)
                if (!last || m.sender > last->sender) last = &m;
            return (last ? last->content : query.text) + "|" + std::to_string(self);
        }
        case ScriptedTag::FixedAnswer:
            return behavior.answer;
        case ScriptedTag::MajorityOfInputs:
            return majority_vote(query, self, temporal, spatial, behavior.self_accuracy, rng);
        case ScriptedTag::NoisyOracle: {
            const std::string pick = noisy_label(query, behavior.accuracy, rng);
            return pick + "\nWorked through the question and settled on option " + pick + ".";
        }
    }
    return query.text;
}

ScriptedAgent::ScriptedAgent(ScriptedBehavior behavior, RoleProfile role)
    : behavior_(std::move(behavior)), role_(std::move(role)) {
    behavior_.validate();
}

AgentReply ScriptedAgent::respond(const AgentContext& ctx) const {
    Rng rng(derive_seed(ctx.seed, {behavior_.seed}));
    AgentReply reply;
    reply.content = scripted_respond(behavior_, ctx.query, ctx.self, ctx.temporal, ctx.spatial, rng);
    ctx.node.state["last_answer"] = normalize_answer(reply.content);
    return reply;
}

std::string ScriptedAgent::describe() const { return "scripted:" + std::string(to_string(behavior_.tag)); }

AgentPtr wrap_prompt_attack(AgentPtr agent) {
    if (is_prompt_attacked(*agent)) return agent;
    return std::make_shared<PromptAttackedAgent>(std::move(agent));
}

AgentPtr wrap_replacement_attack(AgentPtr agent, Rng& rng) {
    return std::make_shared<ReplacementAttackedAgent>(std::move(agent), rng.next());
}

bool is_prompt_attacked(const Agent& agent) { return dynamic_cast<const PromptAttackedAgent*>(&agent) != nullptr; }

bool is_replacement_attacked(const Agent& agent) {
    return dynamic_cast<const ReplacementAttackedAgent*>(&agent) != nullptr;
}

std::string reply_answer(const Message& message) { return normalize_answer(message.content); }

}  // namespace agentprune
