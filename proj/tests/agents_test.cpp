#include <map>

#include <gtest/gtest.h>

#include "agentprune/agents.hpp"
#include "agentprune/error.hpp"

using namespace agentprune;

namespace {

Query labeled(std::string label = "B") {
    Query q;
    q.id = "q0";
    q.text = "Which option?";
    q.label = std::move(label);
    return q;
}

Message msg(NodeId sender, std::string content) {
    Message m;
    m.sender = sender;
    m.content = std::move(content);
    return m;
}

std::string ask(const Agent& agent, const Query& q, std::uint64_t seed, std::span<const Message> spatial = {},
                std::span<const Message> temporal = {}) {
    AgentNode node;
    node.id = 0;
    AgentContext ctx{q, 1, 0, node, temporal, spatial, seed};
    return agent.respond(ctx).content;
}

std::shared_ptr<ScriptedAgent> scripted(ScriptedTag tag, double accuracy = 1.0) {
    ScriptedBehavior b;
    b.tag = tag;
    b.accuracy = accuracy;
    b.answer = "C";
    return std::make_shared<ScriptedAgent>(b);
}

}  // namespace

TEST(Scripted, Echo) {
    Query q;
    q.text = "Q";
    EXPECT_EQ(ask(*scripted(ScriptedTag::Echo), q, 0), "Q");
}

TEST(Scripted, FixedAnswer) {
    for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(ask(*scripted(ScriptedTag::FixedAnswer), labeled(), s), "C");
}

TEST(Scripted, MajorityOfInputs) {
    const std::vector<Message> in{msg(0, "A"), msg(1, "A"), msg(2, "B")};
    EXPECT_EQ(ask(*scripted(ScriptedTag::MajorityOfInputs), labeled(), 0, in), "A");
    // tie goes to the lowest sender
    const std::vector<Message> tie{msg(3, "D"), msg(1, "C")};
    EXPECT_EQ(ask(*scripted(ScriptedTag::MajorityOfInputs), labeled(), 0, tie), "C");
    // no inputs and no own vote: echo
    EXPECT_EQ(ask(*scripted(ScriptedTag::MajorityOfInputs), labeled(), 0), "Which option?");
}

TEST(Scripted, MajorityCountsTemporalAndFirstLine) {
    const std::vector<Message> spatial{msg(2, "b\nbecause")};
    const std::vector<Message> temporal{msg(0, "B"), msg(1, "A")};
    EXPECT_EQ(ask(*scripted(ScriptedTag::MajorityOfInputs), labeled(), 0, spatial, temporal), "B");
}

TEST(Scripted, NoisyOracleBoundaries) {
    for (std::uint64_t s = 0; s < 50; ++s)
        EXPECT_EQ(normalize_answer(ask(*scripted(ScriptedTag::NoisyOracle, 1.0), labeled(), s)), "B");
    for (std::uint64_t s = 0; s < 50; ++s)
        EXPECT_NE(normalize_answer(ask(*scripted(ScriptedTag::NoisyOracle, 0.0), labeled(), s)), "B");
}

TEST(Scripted, NoisyOracleFrequency) {
    auto agent = scripted(ScriptedTag::NoisyOracle, 0.7);
    int hits = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) hits += normalize_answer(ask(*agent, labeled(), s)) == "B" ? 1 : 0;
    EXPECT_NEAR(hits / 10000.0, 0.7, 0.02);
}

TEST(Scripted, NoLabelIsConfigError) {
    Query q;
    q.text = "?";
    EXPECT_THROW(ask(*scripted(ScriptedTag::NoisyOracle, 0.5), q, 1), Error);
}

TEST(Scripted, DeterministicInSeed) {
    auto agent = scripted(ScriptedTag::NoisyOracle, 0.5);
    for (std::uint64_t s = 0; s < 100; ++s) EXPECT_EQ(ask(*agent, labeled(), s), ask(*agent, labeled(), s));
}

TEST(Scripted, BadAccuracyRejected) {
    ScriptedBehavior b;
    b.tag = ScriptedTag::NoisyOracle;
    b.accuracy = 1.2;
    EXPECT_THROW(ScriptedAgent{b}, Error);
}

TEST(PromptAttack, LiarNeverRight) {
    auto liar = wrap_prompt_attack(scripted(ScriptedTag::NoisyOracle, 1.0));
    for (std::uint64_t s = 0; s < 1000; ++s) EXPECT_NE(normalize_answer(ask(*liar, labeled(), s)), "B");
}

TEST(PromptAttack, Idempotent) {
    auto once = wrap_prompt_attack(scripted(ScriptedTag::Echo));
    auto twice = wrap_prompt_attack(once);
    EXPECT_EQ(once.get(), twice.get());
    EXPECT_EQ(twice->role().name, "liar");
    EXPECT_TRUE(is_prompt_attacked(*twice));
}

TEST(PromptAttack, PeersUnaffected) {
    auto honest = scripted(ScriptedTag::NoisyOracle, 0.7);
    auto liar = wrap_prompt_attack(scripted(ScriptedTag::NoisyOracle, 0.7));
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto before = ask(*honest, labeled(), s);
        ask(*liar, labeled(), s);
        EXPECT_EQ(ask(*honest, labeled(), s), before);
    }
}

TEST(ReplacementAttack, UniformOverChoices) {
    Rng rng(5);
    auto dummy = wrap_replacement_attack(scripted(ScriptedTag::NoisyOracle, 1.0), rng);
    std::map<std::string, int> counts;
    for (std::uint64_t s = 0; s < 10000; ++s) counts[normalize_answer(ask(*dummy, labeled(), s))]++;
    ASSERT_EQ(counts.size(), 4u);
    for (const auto& [label, c] : counts) EXPECT_NEAR(c / 10000.0, 0.25, 0.02) << label;
    EXPECT_TRUE(is_replacement_attacked(*dummy));
}

TEST(ReplacementAttack, IgnoresInputs) {
    Rng rng(6);
    auto dummy = wrap_replacement_attack(scripted(ScriptedTag::MajorityOfInputs), rng);
    const std::vector<Message> peers{msg(1, "A"), msg(2, "A"), msg(3, "A")};
    for (std::uint64_t s = 0; s < 300; ++s) EXPECT_EQ(ask(*dummy, labeled(), s), ask(*dummy, labeled(), s, peers));
}

TEST(Roles, BundledRolesRender) {
    const auto names = builtin_role_names();
    EXPECT_GE(names.size(), 5u);
    for (const auto& n : names) {
        const auto& r = builtin_role(n);
        EXPECT_NO_THROW(r.validate()) << n;
        EXPECT_NE(r.render("XYZZY").find("XYZZY"), std::string::npos) << n;
    }
    EXPECT_THROW(builtin_role("nobody"), Error);
}

TEST(Roles, TemplateValidation) {
    EXPECT_THROW((RoleProfile{"x", "hello {name}"}.validate()), Error);
    EXPECT_THROW((RoleProfile{"x", "open {question"}.validate()), Error);
    EXPECT_THROW((RoleProfile{"x", "close }"}.validate()), Error);
    EXPECT_EQ((RoleProfile{"x", "Q: {question}!"}.render("why")), "Q: why!");
}

TEST(NormalizeAnswer, FirstLineTrimmedUpper) {
    EXPECT_EQ(normalize_answer("  c \nmore"), "C");
    EXPECT_EQ(normalize_answer(""), "");
}
