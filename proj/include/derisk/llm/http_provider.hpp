#pragma once

#include <string>

#include "derisk/llm/provider.hpp"

namespace derisk::llm {

struct HttpProviderConfig {
    std::string base_url;             ///< e.g. "http://127.0.0.1:8000"
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env;          ///< name of the env var holding the bearer token; may be empty
    int timeout_ms = 30000;
    int retries = 2;                  ///< extra attempts after the first, only on transport failure or 5xx

    static HttpProviderConfig from_json(const Json& j);
};

/// OpenAI-compatible chat-completions client.
class HttpProvider final : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config);

    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return "http:" + config_.model; }

    /// Request body exactly as sent on the wire.
    Json build_body(const ChatRequest& request) const;

private:
    HttpProviderConfig config_;
};

}  // namespace derisk::llm
