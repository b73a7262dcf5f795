#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>

#include "derisk/mcp/server.hpp"

namespace derisk::mcp {

/// Immutable-after-load store of metric fixtures, keyed by (app, metric).
class MetricStore {
public:
    /// Requires strictly increasing timestamps.
    void add(TimeSeries series);
    const TimeSeries& series(const std::string& app, const std::string& metric) const;  ///< UnknownApp / UnknownMetric
    bool empty() const noexcept { return series_.empty(); }
    std::vector<std::pair<std::string, std::string>> keys() const;

    /// "timestamp,value" rows with an optional header line.
    static TimeSeries read_csv(const std::filesystem::path& path, std::string app, std::string metric, Polarity polarity);

private:
    std::map<std::pair<std::string, std::string>, TimeSeries> series_;
};

/// Points with start <= ts <= end, as a contiguous slice of the fixture.
/// InvalidWindow when start > end, EmptyWindow when nothing falls inside.
TimeSeries get_app_metric(const MetricStore& store, const std::string& app, const std::string& metric, Timestamp start,
                          Timestamp end);

ToolDescriptor get_app_metric_descriptor(const std::string& server_name);

/// The built-in simulated monitoring server exposing get_app_metric.
std::shared_ptr<ToolServer> make_monitor_server(std::shared_ptr<const MetricStore> store,
                                                std::string name = "mcp-monitor");

}  // namespace derisk::mcp
