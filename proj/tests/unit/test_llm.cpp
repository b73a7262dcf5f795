#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <random>
#include <thread>

#include <httplib.h>

#include "derisk/common/error.hpp"
#include "derisk/llm/http_provider.hpp"
#include "derisk/llm/scripted.hpp"
#include "derisk/llm/tokens.hpp"

using namespace derisk;
using namespace derisk::llm;

namespace {

ChatRequest ask(const std::string& user) {
    ChatRequest r;
    r.messages.push_back({Role::system, "profile"});
    r.messages.push_back({Role::user, user});
    return r;
}

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::ConfigError;
}

/// Local chat-completions stub on an ephemeral port.
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion(const std::string& text) {
    return Json{{"choices", Json::array({{{"message", {{"role", "assistant"}, {"content", text}}},
                                          {"finish_reason", "stop"}}})},
                {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
        .dump();
}

}  // namespace

TEST(CountTokens, CeilingOfBytesOverFour) {
    EXPECT_EQ(count_tokens(""), 0u);
    EXPECT_EQ(count_tokens("a"), 1u);
    EXPECT_EQ(count_tokens("abcd"), 1u);
    EXPECT_EQ(count_tokens("abcde"), 2u);
    EXPECT_EQ(count_tokens("hello world"), 3u);
    EXPECT_EQ(count_tokens(std::string(4000, 'x')), 1000u);
    // multi-byte text counts bytes, not code points
    EXPECT_EQ(count_tokens("\xc3\xa9\xc3\xa9"), 1u);
    EXPECT_EQ(count_tokens("\xe2\x80\xa6"), 1u);
}

TEST(CountTokens, SumBoundOverRandomSplits) {
    std::mt19937 rng(3);
    for (int i = 0; i < 500; ++i) {
        const auto n = rng() % 200;
        std::string s(n, 'a');
        const auto cut = n ? rng() % n : 0;
        const auto whole = count_tokens(s);
        const auto parts = count_tokens(s.substr(0, cut)) + count_tokens(s.substr(cut));
        EXPECT_LE(whole, parts);
        EXPECT_LE(parts, whole + 1);
    }
}

TEST(ParseScript, FieldsAndDefaults) {
    const auto book = parse_script(
        "# comment\n"
        "{\"matcher\":\"phase=plan\",\"response\":\"ok\",\"max_uses\":2}\n"
        "\n"
        "{\"matcher\":\"x\",\"response\":{\"thought\":\"t\",\"final\":\"done\"},\"max_uses\":\"unlimited\"}\n"
        "{\"matcher\":\"y\",\"response\":\"z\"}\n");
    ASSERT_EQ(book.entries.size(), 3u);
    EXPECT_EQ(book.entries[0].max_uses, std::optional<std::size_t>(2));
    EXPECT_FALSE(book.entries[1].max_uses.has_value());
    EXPECT_EQ(Json::parse(book.entries[1].response)["final"], "done");
    EXPECT_FALSE(book.entries[2].max_uses.has_value());
}

TEST(ParseScript, MalformedLinesReportLineNumber) {
    for (const auto* bad : {"{\"matcher\":\"a\"}", "not json", "{\"matcher\":\"\",\"response\":\"r\"}",
                            "{\"matcher\":\"a\",\"response\":\"r\",\"max_uses\":0}", "[1,2]"}) {
        try {
            parse_script(std::string("\n") + bad);
            ADD_FAILURE() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::ScriptParseError);
            EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
        }
    }
}

TEST(ScriptedProvider, MaxUsesOneThenNoMatch) {
    ScriptedProvider p(parse_script(R"({"matcher":"error rate","response":"R1","max_uses":1})"));
    EXPECT_EQ(p.complete(ask("check the error rate")).text, "R1");
    EXPECT_EQ(code_of([&] { p.complete(ask("check the error rate")); }), Errc::NoScriptMatch);
    EXPECT_EQ(p.remaining()[0], std::optional<std::size_t>(0));
}

TEST(ScriptedProvider, DuplicateMatchersEarlierWinsUntilSpent) {
    ScriptedProvider p(parse_script(R"({"matcher":"m","response":"first","max_uses":2}
{"matcher":"m","response":"second","max_uses":"unlimited"})"));
    EXPECT_EQ(p.complete(ask("m")).text, "first");
    EXPECT_EQ(p.complete(ask("m")).text, "first");
    for (int i = 0; i < 5; ++i) EXPECT_EQ(p.complete(ask("m")).text, "second");
    EXPECT_EQ(p.calls(), 7u);
}

TEST(ScriptedProvider, MatchesLastUserMessageOnly) {
    ScriptedProvider p(parse_script(R"({"matcher":"alpha","response":"A"})"));
    ChatRequest r = ask("alpha");
    r.messages.push_back({Role::assistant, "thinking"});
    r.messages.push_back({Role::user, "beta"});
    EXPECT_EQ(code_of([&] { p.complete(r); }), Errc::NoScriptMatch);
    r.messages.push_back({Role::user, "now alpha"});
    EXPECT_EQ(p.complete(r).text, "A");
}

TEST(ScriptedProvider, UsageAccounting) {
    ScriptedProvider p(parse_script(R"({"matcher":"q","response":"abcdefgh"})"));
    const auto req = ask("q");
    const auto out = p.complete(req);
    EXPECT_EQ(out.completion_tokens, 2u);
    EXPECT_EQ(out.prompt_tokens, req.prompt_tokens());
    EXPECT_EQ(out.finish_reason, FinishReason::stop);
}

// Random books and query sequences against a direct restatement of first-unexhausted-match.
TEST(ScriptedProvider, FirstUnexhaustedMatchOracle) {
    std::mt19937 rng(99);
    const std::vector<std::string> words{"alpha", "beta", "gamma", "delta"};
    for (int trial = 0; trial < 100; ++trial) {
        ScriptBook book;
        const auto n = 1 + rng() % 6;
        for (std::size_t i = 0; i < n; ++i) {
            ScriptEntry e{words[rng() % words.size()], "r" + std::to_string(i), std::nullopt};
            if (rng() % 2) e.max_uses = 1 + rng() % 3;
            book.entries.push_back(e);
        }
        ScriptedProvider p(book);
        std::vector<std::size_t> used(n, 0);
        for (int q = 0; q < 20; ++q) {
            const auto query = words[rng() % words.size()] + " " + words[rng() % words.size()];
            std::optional<std::size_t> pick;
            for (std::size_t i = 0; i < n && !pick; ++i) {
                const auto& e = book.entries[i];
                if (e.max_uses && used[i] >= *e.max_uses) continue;
                if (query.find(e.matcher) != std::string::npos) pick = i;
            }
            if (pick) {
                ++used[*pick];
                EXPECT_EQ(p.complete(ask(query)).text, book.entries[*pick].response);
            } else {
                EXPECT_EQ(code_of([&] { p.complete(ask(query)); }), Errc::NoScriptMatch);
            }
        }
    }
}

TEST(HttpProvider, ConfigValidation) {
    EXPECT_EQ(code_of([] { HttpProviderConfig::from_json(Json::object()); }), Errc::ConfigError);
    EXPECT_EQ(code_of([] { HttpProviderConfig::from_json({{"base_url", "http://x"}, {"timeout_ms", 0}}); }),
              Errc::ConfigError);
    const auto c = HttpProviderConfig::from_json({{"base_url", "http://x"}, {"model", "m"}});
    EXPECT_EQ(c.path, "/v1/chat/completions");
    EXPECT_EQ(c.retries, 2);
}

TEST(HttpProvider, BodyShape) {
    HttpProviderConfig c;
    c.base_url = "http://127.0.0.1:1";
    c.model = "test-model";
    HttpProvider p(c);
    const auto body = p.build_body(ask("hi"));
    EXPECT_EQ(body["model"], "test-model");
    ASSERT_EQ(body["messages"].size(), 2u);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][1]["content"], "hi");
    EXPECT_EQ(body["temperature"], 0.0);
}

TEST(HttpProvider, SuccessParsesChoiceAndUsage) {
    std::string seen_auth;
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        res.set_content(completion("worsening"), "application/json");
    });
    ::setenv("DERISK_TEST_KEY", "sekret", 1);
    HttpProviderConfig c;
    c.base_url = stub.url();
    c.model = "m";
    c.api_key_env = "DERISK_TEST_KEY";
    const auto out = HttpProvider(c).complete(ask("q"));
    EXPECT_EQ(out.text, "worsening");
    EXPECT_EQ(out.prompt_tokens, 11u);
    EXPECT_EQ(out.completion_tokens, 3u);
    EXPECT_EQ(seen_auth, "Bearer sekret");
}

TEST(HttpProvider, RetriesServerErrorsThenSucceeds) {
    std::atomic<int> hits{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 503;
            return;
        }
        res.set_content(completion("ok"), "application/json");
    });
    HttpProviderConfig c;
    c.base_url = stub.url();
    c.retries = 2;
    EXPECT_EQ(HttpProvider(c).complete(ask("q")).text, "ok");
    EXPECT_EQ(hits.load(), 3);
}

TEST(HttpProvider, RetryBudgetExhaustedIsUnavailable) {
    std::atomic<int> hits{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
    });
    HttpProviderConfig c;
    c.base_url = stub.url();
    c.retries = 1;
    EXPECT_EQ(code_of([&] { HttpProvider(c).complete(ask("q")); }), Errc::ProviderUnavailable);
    EXPECT_EQ(hits.load(), 2);
}

TEST(HttpProvider, ClientErrorNotRetried) {
    std::atomic<int> hits{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
    });
    HttpProviderConfig c;
    c.base_url = stub.url();
    EXPECT_EQ(code_of([&] { HttpProvider(c).complete(ask("q")); }), Errc::ProviderUnavailable);
    EXPECT_EQ(hits.load(), 1);
}

TEST(HttpProvider, SlowServerTimesOut) {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content(completion("late"), "application/json");
    });
    HttpProviderConfig c;
    c.base_url = stub.url();
    c.timeout_ms = 150;
    c.retries = 0;
    EXPECT_EQ(code_of([&] { HttpProvider(c).complete(ask("q")); }), Errc::ProviderTimeout);
}

TEST(HttpProvider, RefusedConnectionIsUnavailable) {
    HttpProviderConfig c;
    c.base_url = "http://127.0.0.1:1";
    c.retries = 0;
    c.timeout_ms = 500;
    EXPECT_EQ(code_of([&] { HttpProvider(c).complete(ask("q")); }), Errc::ProviderUnavailable);
}
