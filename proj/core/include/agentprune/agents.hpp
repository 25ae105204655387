#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agentprune/graph.hpp"
#include "agentprune/message.hpp"
#include "agentprune/rng.hpp"

namespace agentprune {

struct Query {
    std::string id;
    std::string text;
    /// Ground truth. Scripted oracles and the training utility read it; it is
    /// never shown to prompt-driven backends.
    std::optional<std::string> label;
    std::vector<std::string> choices{"A", "B", "C", "D"};
};

/// Role prompt with {question} placeholders.
struct RoleProfile {
    std::string name;
    std::string prompt_template;

    /// Throws InvalidConfig for unbalanced braces or unknown placeholders.
    void validate() const;
    std::string render(std::string_view question) const;

    bool operator==(const RoleProfile&) const = default;
};

const RoleProfile& builtin_role(std::string_view name);
std::vector<std::string> builtin_role_names();
RoleProfile load_role_file(const std::string& path);

struct AgentReply {
    std::string content;
    std::optional<std::size_t> prompt_tokens;
    std::optional<std::size_t> completion_tokens;
    std::size_t attempts = 1;
};

/// Everything an agent may condition on for one utterance.
struct AgentContext {
    const Query& query;
    int round = 1;
    NodeId self = 0;
    AgentNode& node;  // State_i may be updated
    std::span<const Message> temporal;
    std::span<const Message> spatial;
    /// Stream seed for this (query, round, agent); scripted agents draw from it.
    std::uint64_t seed = 0;
};

class Agent {
public:
    virtual ~Agent() = default;

    virtual AgentReply respond(const AgentContext& ctx) const = 0;
    virtual const RoleProfile& role() const = 0;

    /// Copy of this agent driven by a different role prompt, or null when
    /// the backend does not read role prompts (scripted agents).
    virtual std::shared_ptr<const Agent> with_role(const RoleProfile& role) const {
        (void)role;
        return nullptr;
    }

    virtual std::string describe() const = 0;
};

using AgentPtr = std::shared_ptr<const Agent>;
using Team = std::vector<AgentPtr>;

enum class ScriptedTag { Echo, AppendId, FixedAnswer, MajorityOfInputs, NoisyOracle };

std::string_view to_string(ScriptedTag tag) noexcept;
ScriptedTag scripted_tag_from_string(std::string_view text);

/// Deterministic test doubles.
///
///   echo               replies with the query text
///   append-id          last spatial input (or the query) followed by "|<id>"
///   fixed-answer       always `answer`
///   majority-of-inputs most common first-line answer among temporal and
///                      spatial inputs, ties to the lowest sender id. When
///                      self_accuracy is set the agent also casts its own
///                      noisy-oracle vote, which wins ties it takes part in
///                      and stands alone when no input arrives. Without
///                      self_accuracy and without inputs it echoes the query.
///   noisy-oracle       the true label with probability `accuracy`, else a
///                      wrong label drawn uniformly
struct ScriptedBehavior {
    ScriptedTag tag = ScriptedTag::Echo;
    std::string answer;
    double accuracy = 1.0;
    std::optional<double> self_accuracy;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Pure function of its inputs and rng.
std::string scripted_respond(const ScriptedBehavior& behavior, const Query& query, NodeId self,
                             std::span<const Message> temporal, std::span<const Message> spatial, Rng& rng);

class ScriptedAgent final : public Agent {
public:
    explicit ScriptedAgent(ScriptedBehavior behavior, RoleProfile role = builtin_role("knowledge_expert"));

    AgentReply respond(const AgentContext& ctx) const override;
    const RoleProfile& role() const override { return role_; }
    std::string describe() const override;

    const ScriptedBehavior& behavior() const noexcept { return behavior_; }

private:
    ScriptedBehavior behavior_;
    RoleProfile role_;
};

/// Replaces the role with the bundled liar prompt. Prompt-driven backends get
/// the liar prompt; scripted agents always answer a wrong label with a
/// misleading rationale. Wrapping an already prompt-attacked agent returns it
/// unchanged.
AgentPtr wrap_prompt_attack(AgentPtr agent);

/// Replaces the agent with a dummy that outputs a uniformly random label and
/// filler text, ignoring every input.
AgentPtr wrap_replacement_attack(AgentPtr agent, Rng& rng);

bool is_prompt_attacked(const Agent& agent);
bool is_replacement_attacked(const Agent& agent);

/// First line of a reply, i.e. its answer in the multiple-choice protocol.
std::string reply_answer(const Message& message);

}  // namespace agentprune
