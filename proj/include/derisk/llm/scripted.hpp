#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "derisk/llm/provider.hpp"

namespace derisk::llm {

struct ScriptEntry {
    std::string matcher;                ///< substring of the last user-role message
    std::string response;
    std::optional<std::size_t> max_uses;  ///< nullopt = unlimited
};

struct ScriptBook {
    std::vector<ScriptEntry> entries;
};

/// One JSON object per line: {"matcher": str, "response": str|object, "max_uses": int|"unlimited"}.
/// Blank lines and lines starting with '#' are skipped. Object responses are stored as their
/// compact dump so an action can be written inline.
ScriptBook parse_script(std::string_view text);
ScriptBook load_script(const std::filesystem::path& path);

/// Deterministic provider: the first unexhausted entry whose matcher occurs in the last
/// user-role message answers. Duplicate matchers are allowed; the earlier entry wins until spent.
class ScriptedProvider final : public Provider {
public:
    explicit ScriptedProvider(ScriptBook book);

    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return "scripted"; }

    /// Remaining uses per entry (nullopt = unlimited), in book order.
    std::vector<std::optional<std::size_t>> remaining() const;
    std::size_t calls() const;

private:
    mutable std::mutex mutex_;
    ScriptBook book_;
    std::vector<std::size_t> used_;
    std::size_t calls_ = 0;
};

}  // namespace derisk::llm
