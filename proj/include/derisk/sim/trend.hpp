#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "derisk/mcp/tool.hpp"

namespace derisk::sim {

enum class Verdict { worsening, recovering, stable };
std::string_view to_string(Verdict v) noexcept;
Verdict parse_verdict(std::string_view name);  ///< PreconditionViolation when unknown

inline constexpr double kDefaultDriftThreshold = 0.05;

struct TrendStats {
    std::size_t points = 0;
    double slope = 0.0;           ///< value units per time unit
    double mean = 0.0;
    double relative_drift = 0.0;  ///< slope * duration / max(|mean|, 1e-9)
    Verdict verdict = Verdict::stable;
};

/// Least-squares fit over (t, value) pairs in any time unit; `duration` uses the same unit.
/// InsufficientPoints below two points.
TrendStats trend_stats(const std::vector<std::pair<double, double>>& points, double duration, mcp::Polarity polarity,
                       double threshold = kDefaultDriftThreshold);

/// Points with start <= ts <= end; duration = end - start.
TrendStats trend_verdict(const mcp::TimeSeries& series, Timestamp start, Timestamp end,
                         double threshold = kDefaultDriftThreshold);

/// 100 * matched / total rounded half-up; a label matches as a case-insensitive substring.
/// PreconditionViolation on an empty label list.
int score_report(const std::string& report, const std::vector<std::string>& expected_findings);

/// First of "worsening", "recovering", "stable" mentioned in `text`, by position.
std::optional<Verdict> stated_verdict(const std::string& text);

}  // namespace derisk::sim
