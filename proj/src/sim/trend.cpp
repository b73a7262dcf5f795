#include "derisk/sim/trend.hpp"

#include <algorithm>
#include <cmath>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"

namespace derisk::sim {

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::worsening: return "worsening";
        case Verdict::recovering: return "recovering";
        case Verdict::stable: return "stable";
    }
    return "stable";
}

Verdict parse_verdict(std::string_view name) {
    if (name == "worsening") return Verdict::worsening;
    if (name == "recovering") return Verdict::recovering;
    if (name == "stable") return Verdict::stable;
    fail(Errc::PreconditionViolation, "unknown verdict '" + std::string(name) + "'");
}

TrendStats trend_stats(const std::vector<std::pair<double, double>>& points, double duration, mcp::Polarity polarity,
                       double threshold) {
    if (points.size() < 2)
        fail(Errc::InsufficientPoints, "trend needs at least 2 points, got " + std::to_string(points.size()));
    const double n = static_cast<double>(points.size());
    double t_mean = 0.0, v_mean = 0.0;
    for (const auto& [t, v] : points) {
        t_mean += t;
        v_mean += v;
    }
    t_mean /= n;
    v_mean /= n;
    double sxy = 0.0, sxx = 0.0;
    for (const auto& [t, v] : points) {
        sxy += (t - t_mean) * (v - v_mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    if (sxx == 0.0) fail(Errc::InsufficientPoints, "all points share one timestamp");
    TrendStats s;
    s.points = points.size();
    s.slope = sxy / sxx;
    s.mean = v_mean;
    s.relative_drift = s.slope * duration / std::max(std::fabs(v_mean), 1e-9);
    const double worse = polarity == mcp::Polarity::higher_is_worse ? s.relative_drift : -s.relative_drift;
    s.verdict = worse > threshold ? Verdict::worsening : worse < -threshold ? Verdict::recovering : Verdict::stable;
    return s;
}

TrendStats trend_verdict(const mcp::TimeSeries& series, Timestamp start, Timestamp end, double threshold) {
    if (start > end) fail(Errc::InvalidWindow, "start is after end");
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : series.points)
        if (p.ts >= start && p.ts <= end) pts.emplace_back(static_cast<double>(p.ts - start), p.value);
    return trend_stats(pts, static_cast<double>(end - start), series.polarity, threshold);
}

int score_report(const std::string& report, const std::vector<std::string>& expected_findings) {
    require(!expected_findings.empty(), "score_report needs at least one expected finding");
    const long n = static_cast<long>(expected_findings.size());
    long m = 0;
    for (const auto& label : expected_findings)
        if (text::contains_ci(report, label)) ++m;
    return static_cast<int>((200 * m + n) / (2 * n));
}

std::optional<Verdict> stated_verdict(const std::string& text) {
    const auto lowered = text::to_lower(text);
    std::optional<Verdict> best;
    std::size_t best_pos = std::string::npos;
    for (auto v : {Verdict::worsening, Verdict::recovering, Verdict::stable}) {
        auto pos = lowered.find(to_string(v));
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best = v;
        }
    }
    return best;
}

}  // namespace derisk::sim
