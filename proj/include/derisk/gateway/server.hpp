#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "derisk/gateway/runner.hpp"

namespace derisk::gateway {

/// Sessions started over HTTP, each run on its own thread.
class SessionManager {
public:
    SessionManager(ServiceConfig config, Environment env);
    ~SessionManager();

    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    /// Fires the scenario and starts the run. ScenarioValidationError, ConfigError.
    Json create(const std::string& scenario, const std::string& preset, const std::string& policy);

    std::shared_ptr<session::EventLog> events(const std::string& session_id) const;  ///< UnknownSession
    session::SessionStatus status(const std::string& session_id) const;             ///< UnknownSession

    /// Returns once hitl_received is buffered. IllegalTransition, UnknownSession.
    void intervene(const std::string& session_id, orchestrator::Intervention intervention);

    /// Null while the run is still going. UnknownSession.
    std::optional<Json> report(const std::string& session_id) const;

    /// {"scenarios":[{"scenario_id","description","presets"}], "errors":[...]}
    Json scenarios() const;

    /// Aborts unfinished runs and joins their threads.
    void shutdown();

    const ServiceConfig& config() const noexcept { return config_; }

private:
    struct Entry;
    std::shared_ptr<Entry> find(const std::string& session_id) const;

    ServiceConfig config_;
    Environment env_;
    session::SessionIdSource ids_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// HTTP surface:
///   POST /sessions                       {"scenario","preset","policy"} -> 201 {"session_id",...}
///   GET  /sessions/{id}                  status
///   GET  /sessions/{id}/events?after=N   NDJSON stream; heartbeat records while idle
///   POST /sessions/{id}/intervene        {"kind","text"} -> 200, 409 on an illegal transition
///   GET  /sessions/{id}/report           200 report, 202 while running
///   GET  /scenarios
class GatewayServer {
public:
    explicit GatewayServer(ServiceConfig config, Environment env);
    ~GatewayServer();

    /// Binds (port 0 picks a free one) and serves on a background thread. Returns the port.
    int start();
    void stop();
    /// Serves on the calling thread until stop().
    void run();

    SessionManager& sessions() noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace derisk::gateway
