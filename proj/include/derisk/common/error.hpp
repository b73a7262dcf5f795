#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace derisk {

enum class Errc {
    // session-core
    EmptyTask,
    UnknownAgent,
    InvalidProfile,
    SessionClosed,
    OrphanToolResult,
    IllegalTransition,
    UnknownScope,
    ScopeViolation,
    UnknownSession,
    InvalidReference,
    // llm-gateway
    NoScriptMatch,
    ScriptParseError,
    ProviderUnavailable,
    ProviderTimeout,
    // mcp-toolkit
    FrameParseError,
    ProtocolError,
    TransportError,
    DuplicateTool,
    UnknownApp,
    UnknownMetric,
    EmptyWindow,
    InvalidWindow,
    // context-engine
    InvalidPolicy,
    BudgetInfeasible,
    DistillGrammarError,
    // reasoning-engine
    MalformedAction,
    DisallowedTool,
    DisallowedVariant,
    StepLimitExceeded,
    PhaseStepLimit,
    NotImplemented,
    // knowledge-engine
    EmptyAfterCleaning,
    UnreadableSource,
    ExtractionGrammarError,
    EmptyIndex,
    UnknownEntity,
    // orchestrator
    PlanGrammarError,
    PlanTooLarge,
    SubtaskFailed,
    UnresolvedPath,
    StepFailed,
    SanitizationLeak,
    UnknownWorkflow,
    Cancelled,
    // incident-sim
    ScenarioValidationError,
    InsufficientPoints,
    // shared
    PreconditionViolation,
    ConfigError,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure the library reports is an Error carrying a stable code.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

    Errc code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, const std::string& message) {
    if (!condition) fail(Errc::PreconditionViolation, message);
}

}  // namespace derisk
