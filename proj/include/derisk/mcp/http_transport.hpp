#pragma once

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace derisk::mcp {

class ToolServer;

/// Accepts one frame per POST on `path`; 200 with the response frame, 204 for notifications.
void mount_http(httplib::Server& http, const std::string& path, std::shared_ptr<const ToolServer> server);

}  // namespace derisk::mcp
