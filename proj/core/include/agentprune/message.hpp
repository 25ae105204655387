#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agentprune {

using NodeId = int;

/// Sender id used for records that originate outside the agent graph.
inline constexpr NodeId kUserNode = -1;

enum class MessageKind { Spatial, Temporal, Query, Answer };

std::string_view to_string(MessageKind kind) noexcept;
MessageKind message_kind_from_string(std::string_view text);

/// One agent utterance in one round.
struct Message {
    int round = 1;
    NodeId sender = 0;
    std::vector<NodeId> recipients;
    std::string content;
    MessageKind kind = MessageKind::Spatial;
    std::size_t token_count = 0;

    bool operator==(const Message&) const = default;
};

/// Counts tokens in message content. The default splits on whitespace.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::size_t count(std::string_view text) const = 0;
};

class WhitespaceTokenizer final : public Tokenizer {
public:
    std::size_t count(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

/// First line of a reply, trimmed and upper-cased. Used when comparing answers.
std::string normalize_answer(std::string_view content);

}  // namespace agentprune
