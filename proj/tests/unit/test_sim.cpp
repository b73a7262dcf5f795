#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"
#include "derisk/common/time.hpp"
#include "derisk/sim/scenario.hpp"
#include "derisk/sim/trend.hpp"
#include "support/fixtures.hpp"

using namespace derisk;
using namespace derisk::sim;
namespace fs = std::filesystem;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::ConfigError;
}

std::string error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    ADD_FAILURE() << "expected an Error";
    return {};
}

fs::path trend_dir() { return derisk::testing::scenarios_dir() / "trend_anonymousapp"; }

/// Writable copy of a shipped scenario.
fs::path copy_scenario(const std::string& id) {
    auto dst = derisk::testing::temp_dir("scn") / id;
    fs::copy(derisk::testing::scenarios_dir() / id, dst, fs::copy_options::recursive);
    return dst;
}

Json read_manifest(const fs::path& dir) { return Json::parse(derisk::testing::read_file(dir / "scenario.json")); }

void write_manifest(const fs::path& dir, const Json& j) {
    derisk::testing::write_file(dir / "scenario.json", j.dump(2));
}

/// Rows of a fixture CSV as (iso text, value), parsed without the library.
std::vector<std::pair<std::string, double>> raw_rows(const fs::path& csv) {
    std::vector<std::pair<std::string, double>> rows;
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        rows.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    }
    return rows;
}

/// Independent fit: raw normal equations over (t - t0, y), no centering.
Verdict oracle_verdict(const std::vector<std::pair<double, double>>& pts, double duration, bool higher_is_worse,
                       double threshold = 0.05) {
    const double t0 = pts.front().first;
    long double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& [t, y] : pts) {
        const long double x = t - t0;
        n += 1;
        st += x;
        sy += y;
        stt += x * x;
        sty += x * y;
    }
    const long double slope = (n * sty - st * sy) / (n * stt - st * st);
    const long double mean = sy / n;
    const long double denom = std::max<long double>(std::fabs(mean), 1e-9L);
    long double r = slope * duration / denom;
    if (!higher_is_worse) r = -r;
    if (r > threshold) return Verdict::worsening;
    if (r < -threshold) return Verdict::recovering;
    return Verdict::stable;
}

}  // namespace

TEST(Scenario, TrendWindowHoldsTwentyOnePoints) {
    const auto sc = load_scenario(trend_dir());
    ASSERT_EQ(sc.series.size(), 1u);
    std::size_t brute = 0;
    for (const auto& [ts, v] : raw_rows(trend_dir() / sc.series[0].file))
        if (ts >= "2025-08-19T15:21:00Z" && ts <= "2025-08-19T15:26:00Z") ++brute;
    EXPECT_EQ(brute, 21u);
    const auto assets = load_assets(sc);
    const auto window = mcp::get_app_metric(*assets.metrics, "anonymousapp", "error_rate",
                                            parse_timestamp("2025-08-19 15:21:00"), parse_timestamp("2025-08-19 15:26:00"));
    EXPECT_EQ(window.points.size(), brute);
}

TEST(Scenario, RenderedTaskIsTheTrendQuery) {
    const auto sc = load_scenario(trend_dir());
    EXPECT_EQ(sc.render_task(), derisk::testing::kTrendQuery);
    const auto agents = session::AgentRegistry::defaults();
    auto fired = fire_trigger(sc, session::Preset::v1_basic_react, agents, "s-0001");
    ASSERT_FALSE(fired.session->transcript().empty());
    const auto& first = fired.session->transcript().front();
    EXPECT_EQ(first.kind, session::MessageKind::user_task);
    EXPECT_EQ(first.text(), derisk::testing::kTrendQuery);
}

TEST(Scenario, MissingFixtureIsNamed) {
    auto dir = copy_scenario("trend_anonymousapp");
    fs::remove(dir / "fixtures" / "anonymousapp.error_rate.csv");
    const auto msg = error_of([&] { load_scenario(dir); });
    EXPECT_NE(msg.find("anonymousapp.error_rate.csv"), std::string::npos) << msg;
    EXPECT_EQ(code_of([&] { load_scenario(dir); }), Errc::ScenarioValidationError);
}

TEST(Scenario, EveryBrokenReferenceIsListed) {
    auto dir = copy_scenario("trend_anonymousapp");
    fs::remove(dir / "fixtures" / "anonymousapp.log");
    fs::remove(dir / "scripts" / "v2.jsonl");
    auto j = read_manifest(dir);
    j["fixtures"]["corpus"] = "no-such-corpus";
    j["trigger"]["severity"] = "P9";
    write_manifest(dir, j);
    const auto msg = error_of([&] { load_scenario(dir); });
    for (const char* needle : {"anonymousapp.log", "v2.jsonl", "no-such-corpus", "P1..P4"})
        EXPECT_NE(msg.find(needle), std::string::npos) << needle << " missing from: " << msg;
}

TEST(Scenario, EmptyFindingsIsValid) {
    auto dir = copy_scenario("trend_anonymousapp");
    fs::remove(dir / "expected.findings");
    const auto sc = load_scenario(dir);
    EXPECT_TRUE(sc.expected_findings.empty());
}

TEST(Scenario, FiredAtOutsideFixtureRange) {
    auto dir = copy_scenario("trend_anonymousapp");
    auto j = read_manifest(dir);
    j["trigger"]["fired_at"] = "2025-08-19T16:00:00Z";
    write_manifest(dir, j);
    const auto msg = error_of([&] { load_scenario(dir); });
    EXPECT_NE(msg.find("fixture time range"), std::string::npos) << msg;
}

TEST(Scenario, UnknownPlaceholderRejected) {
    auto dir = copy_scenario("trend_anonymousapp");
    auto j = read_manifest(dir);
    j["task_template"] = "Look at {{nonsense}} now";
    write_manifest(dir, j);
    EXPECT_EQ(code_of([&] { load_scenario(dir); }), Errc::ScenarioValidationError);
}

TEST(Scenario, PauseCannotBeScheduled) {
    auto dir = copy_scenario("trend_anonymousapp");
    auto j = read_manifest(dir);
    j["hitl"] = Json::array({{{"agent", "sre-agent"}, {"step", 1}, {"action", "pause"}}});
    write_manifest(dir, j);
    EXPECT_EQ(code_of([&] { load_scenario(dir); }), Errc::ScenarioValidationError);
}

TEST(Scenario, CodeChangeTaskMentionsPayload) {
    const auto sc = load_scenario(derisk::testing::scenarios_dir() / "multi_domain_checkout");
    EXPECT_EQ(sc.trigger.source, AlarmSource::code_change);
    const auto task = sc.render_task();
    EXPECT_NE(task.find(sc.trigger.payload), std::string::npos) << task;
    EXPECT_NE(task.find("2025-09-02 10:30:00"), std::string::npos) << task;
}

TEST(Scenario, FiringTwiceGivesIndependentSessions) {
    const auto before = derisk::testing::read_file(trend_dir() / "fixtures" / "anonymousapp.error_rate.csv");
    const auto sc = load_scenario(trend_dir());
    const auto agents = session::AgentRegistry::defaults();
    auto a = fire_trigger(sc, session::Preset::v3_multi_specialist, agents, "s-0001");
    auto b = fire_trigger(sc, session::Preset::v3_multi_specialist, agents, "s-0002");
    EXPECT_NE(a.session->id(), b.session->id());
    EXPECT_NE(a.session.get(), b.session.get());
    EXPECT_NE(a.provider.get(), b.provider.get());
    a.session->transition(session::SessionStatus::running);
    EXPECT_EQ(b.session->status(), session::SessionStatus::pending);
    EXPECT_EQ(derisk::testing::read_file(trend_dir() / "fixtures" / "anonymousapp.error_rate.csv"), before);
    EXPECT_EQ(a.assets.metrics->series("anonymousapp", "error_rate"), b.assets.metrics->series("anonymousapp", "error_rate"));
}

TEST(Scenario, MissingPresetScriptIsConfigError) {
    auto dir = copy_scenario("trend_anonymousapp");
    auto j = read_manifest(dir);
    j["scripts"].erase("v2");
    write_manifest(dir, j);
    const auto sc = load_scenario(dir);
    EXPECT_EQ(code_of([&] { fire_trigger(sc, session::Preset::v2_phased, session::AgentRegistry::defaults(), "s-1"); }),
              Errc::ConfigError);
}

TEST(Scenario, ShippedSuiteCoversTheCaseShapes) {
    const auto ids = list_scenarios(derisk::testing::scenarios_dir());
    for (const char* id : {"trend_anonymousapp", "trend_dualrun", "multi_domain_checkout", "null_value_fault",
                           "policy_reject", "config_mapping", "oversize_page"})
        EXPECT_NE(std::find(ids.begin(), ids.end(), id), ids.end()) << id;
    for (const auto& id : ids) {
        const auto sc = load_scenario(derisk::testing::scenarios_dir() / id);
        EXPECT_EQ(sc.scenario_id, id);
        EXPECT_EQ(sc.scripts.size(), 3u) << id;
        EXPECT_FALSE(sc.expected_findings.empty()) << id;
    }
}

TEST(Scenario, DualRunManifest) {
    const auto sc = load_scenario(derisk::testing::scenarios_dir() / "trend_dualrun");
    ASSERT_TRUE(sc.dual_run);
    const auto task = sc.render_task();
    EXPECT_NE(task.find(sc.dual_run->legacy_conclusion), std::string::npos);
    for (const auto& b : sc.blind_fields) EXPECT_NE(task.find(b), std::string::npos) << b;
}

TEST(Trend, DoublingSeriesIsWorsening) {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i <= 20; ++i) pts.emplace_back(i * 15.0, 1.0 + i / 20.0);
    const auto s = trend_stats(pts, 300.0, mcp::Polarity::higher_is_worse);
    EXPECT_EQ(s.verdict, Verdict::worsening);
    EXPECT_GT(s.relative_drift, 0.5);
}

TEST(Trend, ConstantSeriesIsStable) {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 10; ++i) pts.emplace_back(i, 4.2);
    const auto s = trend_stats(pts, 9.0, mcp::Polarity::higher_is_worse);
    EXPECT_EQ(s.slope, 0.0);
    EXPECT_EQ(s.verdict, Verdict::stable);
}

TEST(Trend, InsufficientPoints) {
    EXPECT_EQ(code_of([] { trend_stats({}, 1.0, mcp::Polarity::higher_is_worse); }), Errc::InsufficientPoints);
    EXPECT_EQ(code_of([] { trend_stats({{0.0, 1.0}}, 1.0, mcp::Polarity::higher_is_worse); }), Errc::InsufficientPoints);
    const auto sc = load_scenario(trend_dir());
    const auto assets = load_assets(sc);
    const auto& series = assets.metrics->series("anonymousapp", "error_rate");
    const auto t = parse_timestamp("2025-08-19T15:21:00Z");
    EXPECT_EQ(code_of([&] { trend_verdict(series, t, t); }), Errc::InsufficientPoints);
}

TEST(Trend, TrendWindowMatchesOracle) {
    const auto sc = load_scenario(trend_dir());
    std::vector<std::pair<double, double>> pts;
    for (const auto& [ts, v] : raw_rows(trend_dir() / sc.series[0].file))
        if (ts >= "2025-08-19T15:21:00Z" && ts <= "2025-08-19T15:26:00Z") pts.emplace_back(parse_timestamp(ts), v);
    ASSERT_EQ(pts.size(), 21u);
    const auto expected = oracle_verdict(pts, 300.0, true);
    const auto assets = load_assets(sc);
    const auto got = trend_verdict(assets.metrics->series("anonymousapp", "error_rate"),
                                   parse_timestamp("2025-08-19T15:21:00Z"), parse_timestamp("2025-08-19T15:26:00Z"));
    EXPECT_EQ(got.points, 21u);
    EXPECT_EQ(got.verdict, expected);
}

TEST(Trend, RandomSeriesMatchOracle) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> val(0.5, 2.0), slope(-0.01, 0.01);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::pair<double, double>> pts;
        const double a = val(rng), b = slope(rng);
        const int n = 2 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) pts.emplace_back(i * 15.0, a + b * i * 15.0 + (val(rng) - 1.25) * 0.01);
        const double dur = (n - 1) * 15.0;
        const auto s = trend_stats(pts, dur, mcp::Polarity::higher_is_worse);
        if (std::fabs(std::fabs(s.relative_drift) - 0.05) < 1e-9) continue;
        EXPECT_EQ(s.verdict, oracle_verdict(pts, dur, true)) << trial;
    }
}

TEST(Trend, TimeUnitScaleInvariance) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> sec, ms;
        const double drift = (val(rng) - 0.5) * 0.02;
        for (int i = 0; i < 21; ++i) {
            const double y = 1.0 + drift * i + val(rng) * 0.001;
            sec.emplace_back(1755616860.0 + i * 15.0, y);
            ms.emplace_back((1755616860.0 + i * 15.0) * 1000.0, y);
        }
        const auto a = trend_stats(sec, 300.0, mcp::Polarity::higher_is_worse);
        const auto b = trend_stats(ms, 300000.0, mcp::Polarity::higher_is_worse);
        if (std::fabs(std::fabs(a.relative_drift) - 0.05) < 1e-9) continue;
        EXPECT_EQ(a.verdict, b.verdict) << trial;
        EXPECT_NEAR(a.relative_drift, b.relative_drift, 1e-9);
    }
}

TEST(Trend, PolarityFlipSwapsVerdicts) {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> pts;
        const double drift = val(rng) * 0.05;
        for (int i = 0; i < 15; ++i) pts.emplace_back(i, 2.0 + drift * i);
        const auto worse = trend_stats(pts, 14.0, mcp::Polarity::higher_is_worse);
        const auto better = trend_stats(pts, 14.0, mcp::Polarity::higher_is_better);
        const auto flipped = worse.verdict == Verdict::worsening    ? Verdict::recovering
                             : worse.verdict == Verdict::recovering ? Verdict::worsening
                                                                    : Verdict::stable;
        EXPECT_EQ(better.verdict, flipped) << trial;
    }
}

TEST(Trend, ThresholdIsOverridable) {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i <= 10; ++i) pts.emplace_back(i, 1.0 + 0.003 * i);  // drift about 0.03
    EXPECT_EQ(trend_stats(pts, 10.0, mcp::Polarity::higher_is_worse).verdict, Verdict::stable);
    EXPECT_EQ(trend_stats(pts, 10.0, mcp::Polarity::higher_is_worse, 0.02).verdict, Verdict::worsening);
}

TEST(Score, RubricArithmetic) {
    EXPECT_EQ(score_report("alpha and beta", {"alpha", "beta", "gamma", "delta"}), 50);
    EXPECT_EQ(score_report("ALPHA beta", {"alpha", "Beta"}), 100);
    EXPECT_EQ(score_report("alpha", {"alpha", "beta", "gamma"}), 33);
    EXPECT_EQ(score_report("alpha beta", {"alpha", "beta", "gamma"}), 67);
    EXPECT_EQ(score_report("a", {"a", "b", "c", "d", "e", "f", "g", "h"}), 13);  // 12.5 rounds up
    EXPECT_EQ(score_report("nothing", {"alpha"}), 0);
    EXPECT_EQ(code_of([] { score_report("x", {}); }), Errc::PreconditionViolation);
}

TEST(Score, AddingAMatchedLabelNeverLowersTheScore) {
    std::mt19937 rng(5);
    const std::vector<std::string> vocab{"cpu", "disk", "pool", "deploy", "rollback", "null", "quota", "cache"};
    for (int trial = 0; trial < 300; ++trial) {
        std::string report;
        for (const auto& w : vocab)
            if (rng() % 2) report += w + " ";
        std::vector<std::string> labels;
        for (const auto& w : vocab)
            if (rng() % 3 == 0) labels.push_back(w);
        if (labels.empty()) labels.push_back(vocab[rng() % vocab.size()]);
        const auto base = score_report(report, labels);
        const auto extra = vocab[rng() % vocab.size()];
        labels.push_back(extra);
        report += extra;
        EXPECT_GE(score_report(report, labels), base) << trial;
    }
}

TEST(Score, StatedVerdictTakesTheEarliestKeyword) {
    EXPECT_EQ(stated_verdict("It is worsening, not recovering"), Verdict::worsening);
    EXPECT_EQ(stated_verdict("Recovering; no longer worsening"), Verdict::recovering);
    EXPECT_EQ(stated_verdict("flat and stable"), Verdict::stable);
    EXPECT_FALSE(stated_verdict("no verdict here"));
}

TEST(ScenarioTools, AnalyzeTrendAgreesWithTheVerdict) {
    const auto sc = load_scenario(trend_dir());
    const auto assets = load_assets(sc);
    auto client = make_tool_client(assets, sc.drift_threshold);
    const auto result = client->call("analyze_trend", {{"app", "anonymousapp"},
                                                       {"metric", "error_rate"},
                                                       {"start", "2025-08-19T15:21:00Z"},
                                                       {"end", "2025-08-19T15:26:00Z"}});
    ASSERT_FALSE(result.is_error) << result.text();
    const auto expected = trend_verdict(assets.metrics->series("anonymousapp", "error_rate"),
                                        parse_timestamp("2025-08-19T15:21:00Z"), parse_timestamp("2025-08-19T15:26:00Z"));
    EXPECT_EQ((*result.first_data())["verdict"], std::string(to_string(expected.verdict)));
    EXPECT_EQ((*result.first_data())["points"], 21);
}

TEST(ScenarioTools, SearchLogsAndKnowledge) {
    const auto sc = load_scenario(trend_dir());
    const auto assets = load_assets(sc);
    auto client = make_tool_client(assets, sc.drift_threshold);
    auto logs = client->call("search_logs", {{"app", "anonymousapp"}, {"pattern", "ERROR"}});
    ASSERT_FALSE(logs.is_error);
    std::size_t brute = 0;
    for (const auto& line : text::split_lines(derisk::testing::read_file(trend_dir() / "fixtures" / "anonymousapp.log")))
        if (line.find("ERROR") != std::string::npos) ++brute;
    EXPECT_EQ((*logs.first_data())["count"], brute);
    auto windowed = client->call("search_logs", {{"app", "anonymousapp"},
                                                 {"pattern", "ERROR"},
                                                 {"start", "2025-08-19T15:22:00Z"},
                                                 {"end", "2025-08-19T15:23:00Z"}});
    EXPECT_EQ((*windowed.first_data())["count"], 1);
    EXPECT_TRUE(client->call("search_logs", {{"app", "ghost"}, {"pattern", "x"}}).is_error);
    auto kb = client->call("query_knowledge", {{"query", "rollback error rate"}, {"k", 2}});
    ASSERT_FALSE(kb.is_error) << kb.text();
    const auto& results = (*kb.first_data())["results"];
    ASSERT_FALSE(results.empty());
    EXPECT_LE(results.size(), 2u);
}
