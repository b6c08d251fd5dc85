#include "summ/eval_server.hpp"

#include <httplib.h>

#include <memory>
#include <stdexcept>

namespace summ::eval {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, json{{"error", {{"code", code}, {"message", message}}}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const EvalError& e) {
      send_error(res, e.http_status(), e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "invalid_json", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw EvalError("invalid_json", e.what());
  }
}

}  // namespace

void register_routes(httplib::Server& server, SessionStore& store) {
  server.Post("/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
                const auto id = store.create(spec_from_json(parse_body(req)));
                const auto n_tasks = store.read(id, [](const Session& s) { return s.tasks().size(); });
                send_json(res, 201, json{{"session_id", id}, {"n_tasks", n_tasks}});
              }));

  server.Get(R"(/sessions/([^/]+)/next)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
               if (!req.has_param("annotator"))
                 throw EvalError("invalid_request", "query parameter 'annotator' is required");
               const auto annotator = req.get_param_value("annotator");
               const auto body = store.read(req.matches[1], [&](const Session& s) {
                 const auto task = s.next_task(annotator);
                 return json{{"task", task ? to_json(*task) : json(nullptr)}, {"remaining", s.remaining(annotator)}};
               });
               send_json(res, 200, body);
             }));

  server.Post(R"(/sessions/([^/]+)/annotations)",
              guarded([&store](const httplib::Request& req, httplib::Response& res) {
                store.submit(req.matches[1], annotation_from_json(parse_body(req)));
                send_json(res, 201, json{{"accepted", true}});
              }));

  server.Get(R"(/sessions/([^/]+)/stats)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
               const auto body = store.read(req.matches[1], [](const Session& s) {
                 json systems = json::array();
                 for (const auto& r : s.accuracy_all()) systems.push_back(to_json(r));
                 return json{{"session_id", s.id()}, {"systems", systems}, {"answers", s.answers()}};
               });
               send_json(res, 200, body);
             }));

  server.Get(R"(/sessions/([^/]+)/agreement)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
               const auto body = store.read(req.matches[1], [](const Session& s) { return to_json(s.agreement()); });
               send_json(res, 200, body);
             }));
}

void serve(const ServerOptions& options) {
  std::unique_ptr<SessionStore> store =
      options.event_log ? std::make_unique<SessionStore>(*options.event_log) : std::make_unique<SessionStore>();
  httplib::Server server;
  register_routes(server, *store);
  if (options.static_dir && !server.set_mount_point("/", options.static_dir->string()))
    throw std::runtime_error("cannot mount static directory " + options.static_dir->string());
  if (!server.listen(options.host, options.port))
    throw std::runtime_error("cannot listen on " + options.host + ":" + std::to_string(options.port));
}

}  // namespace summ::eval
