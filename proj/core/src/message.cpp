#include "agentprune/message.hpp"

#include <cctype>

#include "agentprune/error.hpp"

namespace agentprune {

std::string_view to_string(MessageKind kind) noexcept {
    switch (kind) {
        case MessageKind::Spatial: return "spatial";
        case MessageKind::Temporal: return "temporal";
        case MessageKind::Query: return "query";
        case MessageKind::Answer: return "answer";
    }
    return "spatial";
}

MessageKind message_kind_from_string(std::string_view text) {
    if (text == "spatial") return MessageKind::Spatial;
    if (text == "temporal") return MessageKind::Temporal;
    if (text == "query") return MessageKind::Query;
    if (text == "answer") return MessageKind::Answer;
    throw Error(Errc::ParseError, "unknown message kind '" + std::string(text) + "'");
}

std::size_t WhitespaceTokenizer::count(std::string_view text) const {
    std::size_t tokens = 0;
    bool in_token = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_token) ++tokens;
        in_token = !space;
    }
    return tokens;
}

const Tokenizer& default_tokenizer() {
    static const WhitespaceTokenizer tokenizer;
    return tokenizer;
}

std::string normalize_answer(std::string_view content) {
    const auto newline = content.find('\n');
    std::string_view line = content.substr(0, newline);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    std::string out(line);
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace agentprune
