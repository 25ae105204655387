#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agentprune/agents.hpp"

namespace agentprune {

struct HttpEndpointConfig {
    std::string url = "http://127.0.0.1:8080";  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model;
    double temperature = 0.0;
    std::string auth_header = "Authorization";
    std::string auth_value;
    std::size_t max_attempts = 4;
    std::chrono::milliseconds initial_backoff{250};
    double backoff_multiplier = 2.0;
    std::chrono::milliseconds max_backoff{8000};
    std::chrono::milliseconds timeout{60000};
    std::size_t max_in_flight = 4;
};

/// Environment variable that overrides HttpEndpointConfig::auth_value.
inline constexpr const char* kAuthEnvVar = "AGENTPRUNE_API_KEY";

/// Copy of cfg with auth_value taken from kAuthEnvVar when it is set.
HttpEndpointConfig with_env_auth(HttpEndpointConfig cfg);

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatReply {
    std::string content;
    std::optional<std::size_t> prompt_tokens;
    std::optional<std::size_t> completion_tokens;
    std::size_t attempts = 0;
    std::vector<std::chrono::milliseconds> backoff_delays;
};

/// {"model": ..., "messages": [{"role": ..., "content": ...}], "temperature": ...}
std::string chat_request_body(const HttpEndpointConfig& cfg, std::span<const ChatMessage> messages);

/// Reads choices[0].message.content and the optional usage block.
/// Throws MalformedBackendReply.
ChatReply parse_chat_reply(const std::string& body);

/// System message = rendered role prompt. User message = the query, then
/// previous-round messages, then same-round messages, each group ordered by
/// sender id.
std::vector<ChatMessage> assemble_chat(const RoleProfile& role, const Query& query, std::span<const Message> temporal,
                                       std::span<const Message> spatial);

/// Delay before retry number `retry` (0-based): min(max, initial * multiplier^retry).
std::chrono::milliseconds backoff_delay(const HttpEndpointConfig& cfg, std::size_t retry);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Chat-completion client shared by every agent that talks to one endpoint.
/// Caps concurrent requests at max_in_flight; retries connection failures,
/// timeouts, 429 and 5xx with exponential backoff.
///
/// Errors: AuthFailure (no credential, 401, 403), BackendUnavailable
/// (retries exhausted or non-retryable status), BackendTimeout (retries
/// exhausted on timeouts), MalformedBackendReply.
class ChatClient {
public:
    explicit ChatClient(HttpEndpointConfig cfg, Sleeper sleeper = {});
    ~ChatClient();

    ChatClient(const ChatClient&) = delete;
    ChatClient& operator=(const ChatClient&) = delete;

    ChatReply complete(std::span<const ChatMessage> messages) const;

    const HttpEndpointConfig& config() const noexcept { return cfg_; }

private:
    struct Gate;

    HttpEndpointConfig cfg_;
    Sleeper sleeper_;
    std::unique_ptr<Gate> gate_;
};

ChatReply http_chat_complete(const ChatClient& client, const RoleProfile& role, const Query& query,
                             std::span<const Message> temporal, std::span<const Message> spatial);

class HttpChatAgent final : public Agent {
public:
    HttpChatAgent(std::shared_ptr<const ChatClient> client, RoleProfile role);

    AgentReply respond(const AgentContext& ctx) const override;
    const RoleProfile& role() const override { return role_; }
    std::shared_ptr<const Agent> with_role(const RoleProfile& role) const override;
    std::string describe() const override;

private:
    std::shared_ptr<const ChatClient> client_;
    RoleProfile role_;
};

}  // namespace agentprune
