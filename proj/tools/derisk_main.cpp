#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "derisk/common/error.hpp"
#include "derisk/common/time.hpp"
#include "derisk/gateway/runner.hpp"
#include "derisk/gateway/server.hpp"
#include "derisk/knowledge/index.hpp"
#include "derisk/mcp/server.hpp"
#include "derisk/sim/scenario.hpp"

namespace fs = std::filesystem;
using namespace derisk;

namespace {

gateway::ServiceConfig load_config(const std::string& path) {
    return path.empty() ? gateway::ServiceConfig::defaults() : gateway::ServiceConfig::load(path);
}

knowledge::HybridIndex build_index(const std::string& corpus, const std::string& strategy, const std::string& now) {
    knowledge::KnowledgeBase kb;
    knowledge::CorpusOptions opts;
    opts.strategy = knowledge::parse_chunk_strategy(strategy);
    const Timestamp ts = now.empty() ? static_cast<Timestamp>(std::time(nullptr)) : parse_timestamp(now);
    knowledge::load_corpus(kb, corpus, ts, opts);
    return *kb.snapshot();
}

unsigned parse_mask(const std::vector<std::string>& names) {
    if (names.empty()) return knowledge::kAllIndexes;
    unsigned mask = 0;
    for (const auto& n : names) {
        if (n == "kv") mask |= knowledge::kKv;
        else if (n == "vector") mask |= knowledge::kVector;
        else if (n == "fulltext") mask |= knowledge::kFulltext;
        else fail(Errc::PreconditionViolation, "unknown index '" + n + "'");
    }
    return mask;
}

gateway::GatewayServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DeRisk diagnostic runtime"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "service config file");

    // run
    gateway::CliRunOptions run_opts;
    auto* run = app.add_subcommand("run", "run a scenario headlessly");
    run->add_option("--scenario", run_opts.scenario, "scenario id or directory")->required();
    run->add_option("--preset", run_opts.preset, "v1, v2 or v3");
    run->add_option("--provider", run_opts.provider, "provider binding");
    run->add_option("--policy", run_opts.policy, "context policy name");
    run->add_option("--report", run_opts.report_out, "report file");
    run->add_option("--events", run_opts.events_out, "event log file");
    run->add_option("--scenarios-dir", run_opts.scenarios_dir, "scenario root");
    run->add_option("--config-dir", run_opts.config_dir, "agents, policies, plans and workflows");
    run->add_flag("--keep-ts", run_opts.keep_ts, "keep timestamps in the event log");

    // serve
    std::string host;
    int port = -1;
    auto* serve = app.add_subcommand("serve", "start the HTTP gateway");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "listen port");

    // index
    auto* index = app.add_subcommand("index", "knowledge index tools");
    index->require_subcommand(1);
    std::string corpus, strategy = "semantic", now, out_path, query;
    std::size_t k = 3;
    std::vector<std::string> indexes;
    auto* ibuild = index->add_subcommand("build", "ingest a corpus and write the index dump");
    ibuild->add_option("--corpus", corpus, "corpus directory")->required();
    ibuild->add_option("--strategy", strategy, "semantic, structural or sentence");
    ibuild->add_option("--now", now, "ingestion time");
    ibuild->add_option("--out", out_path, "dump file, stdout when empty");
    auto* iquery = index->add_subcommand("query", "ingest a corpus and run one hybrid query");
    iquery->add_option("--corpus", corpus, "corpus directory")->required();
    iquery->add_option("--query", query, "query text")->required();
    iquery->add_option("--k", k, "result count");
    iquery->add_option("--strategy", strategy, "semantic, structural or sentence");
    iquery->add_option("--now", now, "ingestion time");
    iquery->add_option("--index", indexes, "kv, vector, fulltext (default all)");

    // scenarios
    auto* scen = app.add_subcommand("scenarios", "scenario tools");
    scen->require_subcommand(1);
    std::string scen_dir;
    std::vector<std::string> scen_ids;
    auto* slist = scen->add_subcommand("list", "list scenarios");
    slist->add_option("--dir", scen_dir, "scenario root");
    auto* svalidate = scen->add_subcommand("validate", "validate scenarios");
    svalidate->add_option("--dir", scen_dir, "scenario root");
    svalidate->add_option("ids", scen_ids, "scenario ids or directories (default all)");

    // mcp-serve
    std::string mcp_scenario, mcp_server = "monitor";
    auto* mcp_serve = app.add_subcommand("mcp-serve", "serve scenario tools over stdio");
    mcp_serve->add_option("--scenario", mcp_scenario, "scenario directory")->required();
    mcp_serve->add_option("--server", mcp_server, "monitor or sim")->check(CLI::IsMember({"monitor", "sim"}));

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = load_config(config_path);
        if (run->parsed()) {
            if (run_opts.scenarios_dir.empty()) run_opts.scenarios_dir = cfg.scenario_dir;
            if (run_opts.config_dir.empty()) run_opts.config_dir = cfg.config_dir;
            return gateway::cli_run(run_opts, std::cout, std::cerr);
        }
        if (serve->parsed()) {
            auto c = cfg;
            if (!host.empty()) c.host = host;
            if (port >= 0) c.port = port;
            gateway::GatewayServer server(c, gateway::Environment::load(c.config_dir));
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving on " << c.host << ":" << c.port << "\n";
            server.run();
            g_server = nullptr;
            return 0;
        }
        if (ibuild->parsed()) {
            const auto idx = build_index(corpus, strategy, now);
            const auto body = idx.dump().dump(2) + "\n";
            if (out_path.empty()) {
                std::cout << body;
            } else {
                std::ofstream(out_path) << body;
                std::cout << idx.chunks.size() << " chunks from " << idx.doc_chunks.size() << " documents\n";
            }
            return 0;
        }
        if (iquery->parsed()) {
            const auto idx = build_index(corpus, strategy, now);
            const auto result = knowledge::retrieve(idx, query, k, parse_mask(indexes));
            for (const auto& r : result.ranked)
                std::cout << Json{{"chunk_id", r.chunk_id}, {"score", r.fused_score}, {"ranks", r.ranks}}.dump() << "\n";
            return 0;
        }
        if (slist->parsed()) {
            const fs::path root = scen_dir.empty() ? cfg.scenario_dir : fs::path(scen_dir);
            for (const auto& id : sim::list_scenarios(root)) std::cout << id << "\n";
            return 0;
        }
        if (svalidate->parsed()) {
            const fs::path root = scen_dir.empty() ? cfg.scenario_dir : fs::path(scen_dir);
            if (scen_ids.empty()) scen_ids = sim::list_scenarios(root);
            int bad = 0;
            for (const auto& id : scen_ids) {
                const auto dir = gateway::resolve_scenario(id, root);
                try {
                    if (dir.empty()) fail(Errc::ScenarioValidationError, "unknown scenario '" + id + "'");
                    sim::load_scenario(dir);
                    std::cout << id << " ok\n";
                } catch (const Error& e) {
                    ++bad;
                    std::cout << id << " invalid: " << e.detail() << "\n";
                }
            }
            return bad ? gateway::kExitInvalid : 0;
        }
        if (mcp_serve->parsed()) {
            const auto scenario = sim::load_scenario(mcp_scenario);
            const auto assets = sim::load_assets(scenario);
            const auto server = mcp_server == "monitor" ? mcp::make_monitor_server(assets.metrics)
                                                        : sim::make_scenario_server(assets, scenario.drift_threshold);
            mcp::serve_stdio(*server, std::cin, std::cout);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gateway::kExitInvalid;
    }
    return 0;
}
