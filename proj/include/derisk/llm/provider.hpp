#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "derisk/common/json_util.hpp"

namespace derisk::llm {

enum class Role { system, user, assistant, tool };

std::string_view to_string(Role role) noexcept;

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::vector<Json> tool_schemas;
    std::size_t max_output_tokens = 1024;
    double temperature = 0.0;

    /// Content of the last user-role message, or empty.
    std::string last_user_message() const;
    std::size_t prompt_tokens() const;
};

enum class FinishReason { stop, length, error };

struct ChatResponse {
    std::string text;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    FinishReason finish_reason = FinishReason::stop;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

using ProviderPtr = std::shared_ptr<Provider>;

}  // namespace derisk::llm
