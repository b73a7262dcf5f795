#include "derisk/mcp/monitor.hpp"

#include <fstream>

#include "derisk/common/error.hpp"
#include "derisk/common/text.hpp"

namespace derisk::mcp {

void MetricStore::add(TimeSeries series) {
    for (std::size_t i = 1; i < series.points.size(); ++i)
        if (series.points[i].ts <= series.points[i - 1].ts)
            fail(Errc::PreconditionViolation, series.app + "/" + series.metric + ": timestamps must strictly increase");
    auto key = std::make_pair(series.app, series.metric);
    series_[key] = std::move(series);
}

const TimeSeries& MetricStore::series(const std::string& app, const std::string& metric) const {
    auto it = series_.find({app, metric});
    if (it != series_.end()) return it->second;
    for (const auto& [key, _] : series_)
        if (key.first == app) fail(Errc::UnknownMetric, "unknown metric '" + metric + "' for app '" + app + "'");
    fail(Errc::UnknownApp, "unknown app '" + app + "'");
}

std::vector<std::pair<std::string, std::string>> MetricStore::keys() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [key, _] : series_) out.push_back(key);
    return out;
}

TimeSeries MetricStore::read_csv(const std::filesystem::path& path, std::string app, std::string metric,
                                 Polarity polarity) {
    std::ifstream in(path);
    if (!in) fail(Errc::PreconditionViolation, "cannot open " + path.string());
    TimeSeries s{std::move(app), std::move(metric), {}, polarity};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto row = text::trim(line);
        if (row.empty() || row.front() == '#') continue;
        const auto comma = row.find(',');
        if (comma == std::string::npos)
            fail(Errc::PreconditionViolation, path.string() + ":" + std::to_string(line_no) + ": expected timestamp,value");
        const auto ts_text = text::trim(row.substr(0, comma));
        Timestamp ts;
        if (!try_parse_timestamp(ts_text, ts)) {
            if (line_no == 1) continue;  // header
            fail(Errc::PreconditionViolation, path.string() + ":" + std::to_string(line_no) + ": bad timestamp");
        }
        try {
            s.points.push_back({ts, std::stod(text::trim(row.substr(comma + 1)))});
        } catch (const std::exception&) {
            fail(Errc::PreconditionViolation, path.string() + ":" + std::to_string(line_no) + ": bad value");
        }
    }
    return s;
}

TimeSeries get_app_metric(const MetricStore& store, const std::string& app, const std::string& metric, Timestamp start,
                          Timestamp end) {
    if (start > end) fail(Errc::InvalidWindow, "start is after end");
    const auto& full = store.series(app, metric);
    TimeSeries out{full.app, full.metric, {}, full.polarity};
    for (const auto& p : full.points)
        if (p.ts >= start && p.ts <= end) out.points.push_back(p);
    if (out.points.empty())
        fail(Errc::EmptyWindow, "no points for " + app + "/" + metric + " in [" + format_timestamp(start) + ", " +
                                    format_timestamp(end) + "]");
    return out;
}

ToolDescriptor get_app_metric_descriptor(const std::string& server_name) {
    ToolDescriptor d;
    d.name = "get_app_metric";
    d.description = "Fetch a monitoring time series for an app and metric over an inclusive time window.";
    d.params = {
        {"app", ParamType::string, true, "application identifier"},
        {"metric", ParamType::string, true, "metric identifier, e.g. error_rate"},
        {"start", ParamType::timestamp, true, "window start (inclusive)"},
        {"end", ParamType::timestamp, true, "window end (inclusive)"},
    };
    d.server = server_name;
    return d;
}

std::shared_ptr<ToolServer> make_monitor_server(std::shared_ptr<const MetricStore> store, std::string name) {
    auto server = std::make_shared<ToolServer>(std::move(name));
    server->register_tool(get_app_metric_descriptor(server->name()), [store](const Json& args) {
        const auto series = get_app_metric(*store, args["app"].get<std::string>(), args["metric"].get<std::string>(),
                                           parse_timestamp(args["start"].get<std::string>()),
                                           parse_timestamp(args["end"].get<std::string>()));
        return ToolCallResult::data(series.to_json());
    });
    return server;
}

}  // namespace derisk::mcp
