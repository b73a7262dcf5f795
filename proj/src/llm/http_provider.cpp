#include "derisk/llm/http_provider.hpp"

#include <chrono>
#include <cstdlib>

#include <httplib.h>

#include "derisk/common/error.hpp"
#include "derisk/llm/tokens.hpp"

namespace derisk::llm {

HttpProviderConfig HttpProviderConfig::from_json(const Json& j) {
    HttpProviderConfig c;
    c.base_url = j.value("base_url", std::string());
    c.path = j.value("path", c.path);
    c.model = j.value("model", std::string());
    c.api_key_env = j.value("api_key_env", std::string());
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retries = j.value("retries", c.retries);
    if (c.base_url.empty()) fail(Errc::ConfigError, "http provider needs base_url");
    if (c.timeout_ms <= 0 || c.retries < 0) fail(Errc::ConfigError, "http provider timeout/retries out of range");
    return c;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {}

Json HttpProvider::build_body(const ChatRequest& request) const {
    Json body;
    body["model"] = config_.model;
    body["messages"] = Json::array();
    for (const auto& m : request.messages)
        body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    body["max_tokens"] = request.max_output_tokens;
    body["temperature"] = request.temperature;
    return body;
}

ChatResponse HttpProvider::complete(const ChatRequest& request) {
    httplib::Client client(config_.base_url);
    const auto secs = config_.timeout_ms / 1000;
    const auto usecs = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const auto body = build_body(request).dump();

    std::string last_failure = "no attempt made";
    bool timed_out = false;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(config_.path, headers, body, "application/json");
        const auto elapsed =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
        if (!res) {
            const auto err = res.error();
            timed_out = err == httplib::Error::ConnectionTimeout ||
                        (err == httplib::Error::Read && elapsed + 50 >= config_.timeout_ms);
            last_failure = httplib::to_string(err);
            continue;
        }
        if (res->status >= 500) {
            timed_out = false;
            last_failure = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) fail(Errc::ProviderUnavailable, "HTTP " + std::to_string(res->status) + ": " + res->body);

        Json reply;
        try {
            reply = Json::parse(res->body);
        } catch (const Json::parse_error&) {
            fail(Errc::ProviderUnavailable, "unparseable completion body");
        }
        ChatResponse out;
        try {
            const auto& choice = reply.at("choices").at(0);
            out.text = choice.at("message").at("content").get<std::string>();
            const auto reason = choice.value("finish_reason", std::string("stop"));
            out.finish_reason = reason == "length" ? FinishReason::length
                                : reason == "stop" ? FinishReason::stop
                                                   : FinishReason::error;
        } catch (const Json::exception&) {
            fail(Errc::ProviderUnavailable, "completion body lacks choices[0].message.content");
        }
        if (reply.contains("usage")) {
            out.prompt_tokens = reply["usage"].value("prompt_tokens", std::size_t{0});
            out.completion_tokens = reply["usage"].value("completion_tokens", std::size_t{0});
        } else {
            out.prompt_tokens = request.prompt_tokens();
            out.completion_tokens = count_tokens(out.text);
        }
        return out;
    }
    if (timed_out)
        fail(Errc::ProviderTimeout, "no response within " + std::to_string(config_.timeout_ms) + " ms");
    fail(Errc::ProviderUnavailable, last_failure);
}

}  // namespace derisk::llm
