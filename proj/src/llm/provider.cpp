#include "derisk/llm/provider.hpp"

#include "derisk/llm/tokens.hpp"

namespace derisk::llm {

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

std::string ChatRequest::last_user_message() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
        if (it->role == Role::user) return it->content;
    return {};
}

std::size_t ChatRequest::prompt_tokens() const {
    std::size_t total = 0;
    for (const auto& m : messages) total += count_tokens(m.content);
    return total;
}

}  // namespace derisk::llm
