#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "summ/eval_session.hpp"

namespace httplib {
class Server;
}

namespace summ::eval {

// Routes:
//   POST /sessions                          -> 201 {"session_id": ...}
//   GET  /sessions/{id}/next?annotator=a    -> {"task": payload|null, "remaining": n}
//   POST /sessions/{id}/annotations         -> 201 {"accepted": true}
//   GET  /sessions/{id}/stats               -> {"systems": [accuracy...]}
//   GET  /sessions/{id}/agreement           -> agreement report
// Failures answer {"error": {"code": ..., "message": ...}}.
void register_routes(httplib::Server& server, SessionStore& store);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> event_log;
  std::optional<std::filesystem::path> static_dir;  // mounted at /
};

// Blocks until the server stops.
void serve(const ServerOptions& options);

}  // namespace summ::eval
