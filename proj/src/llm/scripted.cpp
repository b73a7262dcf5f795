#include "derisk/llm/scripted.hpp"

#include <fstream>
#include <sstream>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/llm/tokens.hpp"

namespace derisk::llm {
namespace {

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
    fail(Errc::ScriptParseError, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

ScriptBook parse_script(std::string_view source) {
    ScriptBook book;
    std::size_t line_no = 0;
    for (const auto& raw : text::split_lines(source)) {
        ++line_no;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            parse_error(line_no, std::string("malformed record: ") + e.what());
        }
        if (!j.is_object()) parse_error(line_no, "record must be an object");
        if (!j.contains("matcher") || !j["matcher"].is_string()) parse_error(line_no, "missing matcher");
        ScriptEntry entry;
        entry.matcher = j["matcher"].get<std::string>();
        if (entry.matcher.empty()) parse_error(line_no, "empty matcher");
        if (!j.contains("response")) parse_error(line_no, "missing response");
        const auto& resp = j["response"];
        entry.response = resp.is_string() ? resp.get<std::string>() : resp.dump();
        if (j.contains("max_uses")) {
            const auto& mu = j["max_uses"];
            if (mu.is_string() && mu.get<std::string>() == "unlimited") {
                entry.max_uses.reset();
            } else if (mu.is_number_integer() && mu.get<long long>() > 0) {
                entry.max_uses = static_cast<std::size_t>(mu.get<long long>());
            } else {
                parse_error(line_no, "max_uses must be a positive integer or \"unlimited\"");
            }
        }
        book.entries.push_back(std::move(entry));
    }
    return book;
}

ScriptBook load_script(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::ScriptParseError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_script(ss.str());
}

ScriptedProvider::ScriptedProvider(ScriptBook book) : book_(std::move(book)), used_(book_.entries.size(), 0) {
    for (std::size_t i = 0; i < book_.entries.size(); ++i)
        if (book_.entries[i].matcher.empty()) fail(Errc::ScriptParseError, "entry " + std::to_string(i) + ": empty matcher");
}

ChatResponse ScriptedProvider::complete(const ChatRequest& request) {
    const auto last = request.last_user_message();
    std::lock_guard lock(mutex_);
    ++calls_;
    for (std::size_t i = 0; i < book_.entries.size(); ++i) {
        const auto& entry = book_.entries[i];
        if (entry.max_uses && used_[i] >= *entry.max_uses) continue;
        if (last.find(entry.matcher) == std::string::npos) continue;
        ++used_[i];
        ChatResponse out;
        out.text = entry.response;
        out.prompt_tokens = request.prompt_tokens();
        out.completion_tokens = count_tokens(out.text);
        out.finish_reason = FinishReason::stop;
        return out;
    }
    fail(Errc::NoScriptMatch, "no script entry matches: " + last);
}

std::vector<std::optional<std::size_t>> ScriptedProvider::remaining() const {
    std::lock_guard lock(mutex_);
    std::vector<std::optional<std::size_t>> out;
    for (std::size_t i = 0; i < book_.entries.size(); ++i) {
        const auto& mu = book_.entries[i].max_uses;
        out.push_back(mu ? std::optional<std::size_t>(*mu - used_[i]) : std::nullopt);
    }
    return out;
}

std::size_t ScriptedProvider::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

}  // namespace derisk::llm
