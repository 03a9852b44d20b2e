#include <filesystem>
#include <thread>

#include "cloudharm/fixtures.hpp"
#include "cloudharm/service.hpp"
#include "cloudharm/store.hpp"
#include "cloudharm/whatif.hpp"
#include "doctest.h"
#include "httplib.h"
#include "support.hpp"

using namespace cloudharm;

namespace {

// Store plus a live service on an ephemeral port.
struct Running {
  testutil::TempDir dir;
  Store store{dir.path()};
  HttpService service;
  std::thread thread;
  int port = 0;

  explicit Running(ServiceOptions options = {}) : service(store, std::move(options)) {
    port = service.bind("127.0.0.1", 0);
    thread = std::thread([this] { service.run(); });
    service.wait_until_ready();
  }
  ~Running() {
    service.stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

std::string dir_snapshot(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += f.string() + "\n" + testutil::slurp(f) + "\n";
  return out;
}

Json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return Json::parse(r->body);
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("status mapping") {
    CHECK(http_status(ErrorKind::not_found) == 404);
    CHECK(http_status(ErrorKind::conflict) == 409);
    CHECK(http_status(ErrorKind::storage) == 500);
    CHECK(http_status(ErrorKind::modification) == 400);
    CHECK(http_status(ErrorKind::usage) == 400);
    const auto doc = error_to_json(ModificationError(3, "bad step", "host"));
    CHECK(doc["error"]["kind"] == "modification");
    CHECK(doc["error"]["step"] == 3);
  }

  TEST_CASE("fresh store") {
    Running svc;
    auto c = svc.client();
    CHECK(body_of(c.Get("/healthz"))["status"] == "ok");
    const auto list = c.Get("/models");
    REQUIRE(list);
    CHECK(list->status == 200);
    CHECK(Json::parse(list->body) == Json::array());
    const auto missing = c.Get("/models/nope/metrics");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(Json::parse(missing->body)["error"]["kind"] == "not_found");
    CHECK(c.Get("/models/nope")->status == 404);
  }

  TEST_CASE("ingest endpoints build a model") {
    Running svc;
    auto c = svc.client();
    const auto sg = c.Post("/ingest/sg", std::string(fixtures::require_file("sg/testbed1.json")), "application/json");
    REQUIRE(sg);
    CHECK(sg->status == 200);
    CHECK(Json::parse(sg->body)["edges"] == 3);
    for (const char* h : {"web", "app", "db"}) {
      const auto report = scan_report_to_json(fixture_scan(
          parse_json_text(fixtures::require_file(std::string("scans/testbed1/") + h + ".json"), h)));
      Json body = {{"report", report}, {"nvd", Json::parse(fixtures::require_file("nvd/snapshot.json"))}};
      const auto r = c.Post("/ingest/scan", body.dump(), "application/json");
      REQUIRE(r);
      CHECK(r->status == 200);
      CHECK(Json::parse(r->body)["hosts_updated"] == 1);
    }
    const auto created = c.Post("/models", R"({"targets": ["db"], "label": "api"})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto id = Json::parse(created->body)["model_id"].get<std::string>();
    const auto metrics = body_of(c.Get("/models/" + id + "/metrics"));
    CHECK(metrics["paths_count"] == 1);
    CHECK(metrics["metrics"]["number_of_hosts"] == 3);

    CHECK(c.Post("/models", R"({"label": "x"})", "application/json")->status == 400);
    CHECK(c.Post("/ingest/sg", "{not json", "application/json")->status == 400);
  }

  TEST_CASE("model endpoints on an installed fixture") {
    Running svc;
    const auto id = fixtures::install(svc.store, "testbed1").model_id;
    auto c = svc.client();

    SUBCASE("model document and metrics match the library output byte for byte") {
      const auto doc = c.Get("/models/" + id);
      REQUIRE(doc);
      CHECK(doc->body == serialize_harm(svc.store.require_harm(id)));
      const auto metrics = c.Get("/models/" + id + "/metrics?gates=or:sum");
      REQUIRE(metrics);
      CHECK(metrics->body == assessment_json_text(assess(svc.store.require_harm(id), parse_gates("or:sum"))));
      CHECK(c.Get("/models/" + id + "/metrics?gates=bogus")->status == 400);
    }

    SUBCASE("paths, psv, trajectory") {
      const auto paths = body_of(c.Get("/models/" + id + "/paths?limit=10"));
      CHECK(paths["total"] == 1);
      CHECK(paths["paths"][0]["hosts"] == Json::array({"web", "app", "db"}));
      const auto psv = body_of(c.Get("/models/" + id + "/psv?k=2"));
      CHECK(psv["ranked"].size() == 2);
      CHECK(c.Get("/models/" + id + "/psv?k=0")->status == 400);
      CHECK(c.Get("/models/" + id + "/psv?k=500")->status == 400);
      const auto csv = c.Get("/models/" + id + "/trajectory?k=5&format=csv");
      REQUIRE(csv);
      CHECK(std::count(csv->body.begin(), csv->body.end(), '\n') == 7);
      CHECK(body_of(c.Get("/models/" + id + "/trajectory?k=3")).size() == 4);
    }

    SUBCASE("preview is side-effect-free") {
      const auto before = dir_snapshot(svc.dir.path());
      const auto empty = c.Post("/models/" + id + "/whatif/preview", "[]", "application/json");
      REQUIRE(empty);
      CHECK(empty->status == 200);
      for (const auto& [key, row] : Json::parse(empty->body)["metrics"].items()) CHECK(row["delta"] == 0.0);
      const auto patched = c.Post("/models/" + id + "/whatif/preview",
                                  R"([{"op": "remove_vulnerability", "host": "web", "vuln_id": "v7web"}])",
                                  "application/json");
      REQUIRE(patched);
      CHECK(Json::parse(patched->body)["metrics"]["sum_risk"]["delta"].get<double>() <= 0.0);
      CHECK(dir_snapshot(svc.dir.path()) == before);
    }

    SUBCASE("bad modification reports the step") {
      const auto r = c.Post("/models/" + id + "/whatif/preview",
                            R"([{"op": "remove_host", "host": "web"}, {"op": "remove_host", "host": "ghost"}])",
                            "application/json");
      REQUIRE(r);
      CHECK(r->status == 400);
      CHECK(Json::parse(r->body)["error"]["step"] == 1);
      CHECK(c.Post("/models/nope/whatif/preview", "[]", "application/json")->status == 404);
    }

    SUBCASE("commit grows the list and enforces expected_children") {
      const auto before = body_of(c.Get("/models")).size();
      const auto r = c.Post("/models/" + id + "/whatif/commit",
                            R"({"mods": [{"op": "remove_vulnerability", "host": "web", "vuln_id": "v7web"}],
                                "label": "patched", "expected_children": 0})",
                            "application/json");
      REQUIRE(r);
      CHECK(r->status == 201);
      const auto committed = Json::parse(r->body);
      const auto list = body_of(c.Get("/models"));
      CHECK(list.size() == before + 1);
      bool found = false;
      for (const auto& m : list) {
        if (m["model_id"] == committed["variant_id"]) {
          found = true;
          CHECK(m["parent_id"] == id);
          CHECK(m["label"] == "patched");
        }
      }
      CHECK(found);
      const auto stale = c.Post("/models/" + id + "/whatif/commit", R"({"mods": [], "expected_children": 0})",
                                "application/json");
      REQUIRE(stale);
      CHECK(stale->status == 409);
      CHECK(body_of(c.Get("/models")).size() == before + 1);
    }
  }

  TEST_CASE("CORS headers when configured") {
    ServiceOptions o;
    o.cors_origin = "http://localhost:5173";
    Running svc(o);
    auto c = svc.client();
    const auto r = c.Get("/healthz");
    REQUIRE(r);
    CHECK(r->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    const auto pre = c.Options("/models");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    Running plain;
    CHECK_FALSE(plain.client().Get("/healthz")->has_header("Access-Control-Allow-Origin"));
  }
}
