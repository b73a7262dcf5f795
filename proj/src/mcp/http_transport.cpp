#include "derisk/mcp/http_transport.hpp"

#include <httplib.h>

#include "derisk/mcp/server.hpp"

namespace derisk::mcp {

void mount_http(httplib::Server& http, const std::string& path, std::shared_ptr<const ToolServer> server) {
    http.Post(path, [server](const httplib::Request& req, httplib::Response& res) {
        auto reply = server->handle_line(req.body);
        if (!reply) {
            res.status = 204;
            return;
        }
        res.set_content(*reply, "application/json");
    });
}

}  // namespace derisk::mcp
