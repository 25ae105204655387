#include "agentprune/http_agent.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "agentprune/error.hpp"

namespace agentprune {

using json = nlohmann::json;

// Counting gate for in-flight requests.
struct ChatClient::Gate {
    explicit Gate(std::size_t limit) : available(std::max<std::size_t>(1, limit)) {}

    void acquire() {
        std::unique_lock lock(mutex);
        cv.wait(lock, [this] { return available > 0; });
        --available;
    }

    void release() {
        {
            std::lock_guard lock(mutex);
            ++available;
        }
        cv.notify_one();
    }

    std::mutex mutex;
    std::condition_variable cv;
    std::size_t available;
};

HttpEndpointConfig with_env_auth(HttpEndpointConfig cfg) {
    if (const char* secret = std::getenv(kAuthEnvVar); secret && *secret) cfg.auth_value = secret;
    return cfg;
}

std::string chat_request_body(const HttpEndpointConfig& cfg, std::span<const ChatMessage> messages) {
    json body;
    body["model"] = cfg.model;
    body["messages"] = json::array();
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    body["temperature"] = cfg.temperature;
    return body.dump();
}

ChatReply parse_chat_reply(const std::string& body) {
    ChatReply reply;
    try {
        const json doc = json::parse(body);
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw Error(Errc::MalformedBackendReply, "message content is not a string");
        reply.content = content.get<std::string>();
        if (doc.contains("usage") && doc["usage"].is_object()) {
            const auto& usage = doc["usage"];
            if (usage.contains("prompt_tokens")) reply.prompt_tokens = usage["prompt_tokens"].get<std::size_t>();
            if (usage.contains("completion_tokens"))
                reply.completion_tokens = usage["completion_tokens"].get<std::size_t>();
        }
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedBackendReply, e.what());
    }
    return reply;
}

std::vector<ChatMessage> assemble_chat(const RoleProfile& role, const Query& query, std::span<const Message> temporal,
                                       std::span<const Message> spatial) {
    auto by_sender = [](std::span<const Message> msgs) {
        std::vector<const Message*> sorted;
        for (const auto& m : msgs) sorted.push_back(&m);
        std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->sender < b->sender; });
        return sorted;
    };

    std::string user = query.text;
    if (!temporal.empty()) {
        user += "\n\nAnswers from the previous round:";
        for (const auto* m : by_sender(temporal)) user += "\n[agent " + std::to_string(m->sender) + "] " + m->content;
    }
    if (!spatial.empty()) {
        user += "\n\nAnswers from other agents in this round:";
        for (const auto* m : by_sender(spatial)) user += "\n[agent " + std::to_string(m->sender) + "] " + m->content;
    }
    return {{"system", role.render(query.text)}, {"user", std::move(user)}};
}

std::chrono::milliseconds backoff_delay(const HttpEndpointConfig& cfg, std::size_t retry) {
    const double raw = static_cast<double>(cfg.initial_backoff.count()) *
                       std::pow(cfg.backoff_multiplier, static_cast<double>(retry));
    const double capped = std::min(raw, static_cast<double>(cfg.max_backoff.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

ChatClient::ChatClient(HttpEndpointConfig cfg, Sleeper sleeper)
    : cfg_(std::move(cfg)), sleeper_(std::move(sleeper)), gate_(std::make_unique<Gate>(cfg_.max_in_flight)) {
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (cfg_.max_attempts < 1) throw Error(Errc::InvalidConfig, "max_attempts must be >= 1");
    if (cfg_.backoff_multiplier < 1.0) throw Error(Errc::InvalidConfig, "backoff_multiplier must be >= 1");
}

ChatClient::~ChatClient() = default;

ChatReply ChatClient::complete(std::span<const ChatMessage> messages) const {
    if (cfg_.auth_value.empty()) {
        throw Error(Errc::AuthFailure, std::string("no credential configured (set ") + kAuthEnvVar + ")");
    }
    const std::string body = chat_request_body(cfg_, messages);
    const httplib::Headers headers{{cfg_.auth_header, cfg_.auth_value}};

    gate_->acquire();
    struct Release {
        Gate* gate;
        ~Release() { gate->release(); }
    } release{gate_.get()};

    httplib::Client client(cfg_.url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    std::vector<std::chrono::milliseconds> delays;
    std::string last_failure;
    bool last_was_timeout = false;
    for (std::size_t attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
        auto res = client.Post(cfg_.path, headers, body, "application/json");
        if (res) {
            const int status = res->status;
            if (status == 200) {
                ChatReply reply = parse_chat_reply(res->body);
                reply.attempts = attempt;
                reply.backoff_delays = std::move(delays);
                return reply;
            }
            if (status == 401 || status == 403) {
                throw Error(Errc::AuthFailure, "endpoint rejected credential with HTTP " + std::to_string(status));
            }
            if (status != 429 && status < 500) {
                throw Error(Errc::BackendUnavailable, "endpoint answered HTTP " + std::to_string(status));
            }
            last_failure = "HTTP " + std::to_string(status);
            last_was_timeout = false;
        } else {
            const auto err = res.error();
            last_was_timeout = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout;
            last_failure = httplib::to_string(err);
        }
        if (attempt < cfg_.max_attempts) {
            const auto delay = backoff_delay(cfg_, attempt - 1);
            delays.push_back(delay);
            sleeper_(delay);
        }
    }
    const std::string what = "gave up after " + std::to_string(cfg_.max_attempts) + " attempts: " + last_failure;
    throw Error(last_was_timeout ? Errc::BackendTimeout : Errc::BackendUnavailable, what);
}

ChatReply http_chat_complete(const ChatClient& client, const RoleProfile& role, const Query& query,
                             std::span<const Message> temporal, std::span<const Message> spatial) {
    const auto chat = assemble_chat(role, query, temporal, spatial);
    ChatReply reply = client.complete(chat);
    if (!reply.completion_tokens) reply.completion_tokens = default_tokenizer().count(reply.content);
    if (!reply.prompt_tokens) {
        std::size_t prompt = 0;
        for (const auto& m : chat) prompt += default_tokenizer().count(m.content);
        reply.prompt_tokens = prompt;
    }
    return reply;
}

HttpChatAgent::HttpChatAgent(std::shared_ptr<const ChatClient> client, RoleProfile role)
    : client_(std::move(client)), role_(std::move(role)) {
    role_.validate();
}

AgentReply HttpChatAgent::respond(const AgentContext& ctx) const {
    const ChatReply chat = http_chat_complete(*client_, role_, ctx.query, ctx.temporal, ctx.spatial);
    AgentReply reply;
    reply.content = chat.content;
    reply.prompt_tokens = chat.prompt_tokens;
    reply.completion_tokens = chat.completion_tokens;
    reply.attempts = chat.attempts;
    ctx.node.state["last_answer"] = normalize_answer(chat.content);
    return reply;
}

std::shared_ptr<const Agent> HttpChatAgent::with_role(const RoleProfile& role) const {
    return std::make_shared<HttpChatAgent>(client_, role);
}

std::string HttpChatAgent::describe() const { return "http:" + client_->config().model + ":" + role_.name; }

}  // namespace agentprune
