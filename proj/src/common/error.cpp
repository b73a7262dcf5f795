#include "derisk/common/error.hpp"

namespace derisk {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyTask: return "EmptyTask";
        case Errc::UnknownAgent: return "UnknownAgent";
        case Errc::InvalidProfile: return "InvalidProfile";
        case Errc::SessionClosed: return "SessionClosed";
        case Errc::OrphanToolResult: return "OrphanToolResult";
        case Errc::IllegalTransition: return "IllegalTransition";
        case Errc::UnknownScope: return "UnknownScope";
        case Errc::ScopeViolation: return "ScopeViolation";
        case Errc::UnknownSession: return "UnknownSession";
        case Errc::InvalidReference: return "InvalidReference";
        case Errc::NoScriptMatch: return "NoScriptMatch";
        case Errc::ScriptParseError: return "ScriptParseError";
        case Errc::ProviderUnavailable: return "ProviderUnavailable";
        case Errc::ProviderTimeout: return "ProviderTimeout";
        case Errc::FrameParseError: return "FrameParseError";
        case Errc::ProtocolError: return "ProtocolError";
        case Errc::TransportError: return "TransportError";
        case Errc::DuplicateTool: return "DuplicateTool";
        case Errc::UnknownApp: return "UnknownApp";
        case Errc::UnknownMetric: return "UnknownMetric";
        case Errc::EmptyWindow: return "EmptyWindow";
        case Errc::InvalidWindow: return "InvalidWindow";
        case Errc::InvalidPolicy: return "InvalidPolicy";
        case Errc::BudgetInfeasible: return "BudgetInfeasible";
        case Errc::DistillGrammarError: return "DistillGrammarError";
        case Errc::MalformedAction: return "MalformedAction";
        case Errc::DisallowedTool: return "DisallowedTool";
        case Errc::DisallowedVariant: return "DisallowedVariant";
        case Errc::StepLimitExceeded: return "StepLimitExceeded";
        case Errc::PhaseStepLimit: return "PhaseStepLimit";
        case Errc::NotImplemented: return "NotImplemented";
        case Errc::EmptyAfterCleaning: return "EmptyAfterCleaning";
        case Errc::UnreadableSource: return "UnreadableSource";
        case Errc::ExtractionGrammarError: return "ExtractionGrammarError";
        case Errc::EmptyIndex: return "EmptyIndex";
        case Errc::UnknownEntity: return "UnknownEntity";
        case Errc::PlanGrammarError: return "PlanGrammarError";
        case Errc::PlanTooLarge: return "PlanTooLarge";
        case Errc::SubtaskFailed: return "SubtaskFailed";
        case Errc::UnresolvedPath: return "UnresolvedPath";
        case Errc::StepFailed: return "StepFailed";
        case Errc::SanitizationLeak: return "SanitizationLeak";
        case Errc::UnknownWorkflow: return "UnknownWorkflow";
        case Errc::Cancelled: return "Cancelled";
        case Errc::ScenarioValidationError: return "ScenarioValidationError";
        case Errc::InsufficientPoints: return "InsufficientPoints";
        case Errc::PreconditionViolation: return "PreconditionViolation";
        case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace derisk
