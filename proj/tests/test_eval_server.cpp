#include <doctest.h>
#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "summ/eval_server.hpp"

using namespace summ::eval;
using nlohmann::json;

namespace {

json session_body() {
  json pairs = json::array(), sys_a = json::array(), sys_b = json::array();
  for (int i = 0; i < 3; ++i) {
    pairs.push_back({{"id", "p" + std::to_string(i)}, {"source", "源" + std::to_string(i)}, {"reference", "REFTEXT"}});
    sys_a.push_back("alpha " + std::to_string(i));
    sys_b.push_back("beta " + std::to_string(i));
  }
  return {{"pairs", pairs},
          {"systems", {{{"id", "SYSTEM_A"}, {"outputs", sys_a}}, {{"id", "SYSTEM_B"}, {"outputs", sys_b}}}},
          {"annotators", {"ann1", "ann2"}},
          {"double_subset_size", 1},
          {"seed", 3}};
}

class Fixture {
 public:
  Fixture() {
    register_routes(server_, store_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Fixture() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(5);
    return c;
  }

 private:
  SessionStore store_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

void check_blinded(const std::string& body) {
  CHECK(body.find("SYSTEM_") == std::string::npos);
  CHECK(body.find("REFTEXT") == std::string::npos);
  CHECK(body.find("reference") == std::string::npos);
  CHECK(body.find("system") == std::string::npos);
}

std::string error_code(const httplib::Result& r) { return json::parse(r->body)["error"]["code"].get<std::string>(); }

}  // namespace

TEST_CASE("full annotation round trip over HTTP") {
  Fixture f;
  auto c = f.client();
  auto r = c.Post("/sessions", session_body().dump(), "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 201);
  const auto created = json::parse(r->body);
  const auto id = created["session_id"].get<std::string>();
  CHECK(created["n_tasks"] == 6);

  std::size_t submitted = 0;
  for (const char* who : {"ann1", "ann2"}) {
    for (;;) {
      r = c.Get("/sessions/" + id + "/next?annotator=" + who);
      REQUIRE(r);
      REQUIRE(r->status == 200);
      check_blinded(r->body);
      const auto body = json::parse(r->body);
      if (body["task"].is_null()) {
        CHECK(body["remaining"] == 0);
        break;
      }
      const auto task = body["task"];
      CHECK(task.contains("source"));
      CHECK(task.contains("candidate"));
      json ann = {{"task_id", task["task_id"]}, {"annotator", who}, {"verdict", "good"}};
      if (task["candidate"].get<std::string>().rfind("beta", 0) == 0) {
        ann["verdict"] = "bad";
        ann["failing_rule"] = "fluency";
      }
      r = c.Post("/sessions/" + id + "/annotations", ann.dump(), "application/json");
      REQUIRE(r);
      CHECK(r->status == 201);
      CHECK(json::parse(r->body)["accepted"] == true);
      ++submitted;
      r = c.Post("/sessions/" + id + "/annotations", ann.dump(), "application/json");
      CHECK(r->status == 409);
      CHECK(error_code(r) == "duplicate");
    }
  }
  CHECK(submitted == 8);

  r = c.Get("/sessions/" + id + "/stats");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto stats = json::parse(r->body);
  CHECK(stats["answers"] == 8);
  REQUIRE(stats["systems"].size() == 2);
  CHECK(stats["systems"][0]["n_good"] == 3);
  CHECK(stats["systems"][1]["n_good"] == 0);
  CHECK(stats["systems"][0]["display"] == "100.0%");

  r = c.Get("/sessions/" + id + "/agreement");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto ag = json::parse(r->body);
  CHECK(ag["n_items"] == 2);
  CHECK(ag["percent_agreement"] == 1.0);
}

TEST_CASE("HTTP errors are machine readable") {
  Fixture f;
  auto c = f.client();
  auto r = c.Post("/sessions", "{not json", "application/json");
  CHECK(r->status == 400);
  CHECK(error_code(r) == "invalid_json");
  auto body = session_body();
  body["annotators"] = json::array();
  r = c.Post("/sessions", body.dump(), "application/json");
  CHECK(r->status == 400);
  CHECK(error_code(r) == "invalid_request");
  r = c.Get("/sessions/s9999/next?annotator=ann1");
  CHECK(r->status == 404);
  CHECK(error_code(r) == "unknown_session");
  r = c.Post("/sessions", session_body().dump(), "application/json");
  const auto id = json::parse(r->body)["session_id"].get<std::string>();
  r = c.Get("/sessions/" + id + "/next");
  CHECK(r->status == 400);
  CHECK(error_code(r) == "invalid_request");
  r = c.Get("/sessions/" + id + "/next?annotator=ghost");
  CHECK(r->status == 404);
  CHECK(error_code(r) == "unknown_annotator");
  json ann = {{"task_id", "t000000"}, {"annotator", "ann1"}, {"verdict", "bad"}};
  r = c.Post("/sessions/" + id + "/annotations", ann.dump(), "application/json");
  CHECK(r->status / 100 == 4);
  r = c.Get("/sessions/" + id + "/agreement");
  CHECK(r->status == 409);
  CHECK(error_code(r) == "no_double_items");
}
