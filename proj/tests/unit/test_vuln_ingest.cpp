#include <atomic>
#include <thread>

#include "cloudharm/error.hpp"
#include "cloudharm/fixtures.hpp"
#include "cloudharm/store.hpp"
#include "cloudharm/vuln_ingest.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cloudharm;

namespace {

ScanReport descriptor_report(const std::string& path) {
  return fixture_scan(parse_json_text(fixtures::require_file(path), path));
}

NvdSnapshot tiny_nvd() {
  return parse_nvd_snapshot(R"({"CVE-2016-8740": {"cvss_base": 5.0, "exploitability": 10.0, "impact": 2.9},
                                "CVE-2016-6515": {"cvss_base": 7.8, "exploitability": 10.0, "impact": 6.9}})");
}

}  // namespace

TEST_SUITE("vuln-ingest") {
  TEST_CASE("CVE id pattern") {
    CHECK(is_cve_id("CVE-2016-8740"));
    CHECK(is_cve_id("CVE-2016-10009"));
    CHECK_FALSE(is_cve_id("CVE-2016-874"));
    CHECK_FALSE(is_cve_id("OOPS"));
    CHECK_FALSE(is_cve_id("cve-2016-8740"));
  }

  TEST_CASE("web report with seven findings") {
    const auto r = descriptor_report("scans/testbed1/web.json");
    CHECK(r.findings.size() == 7);
    const auto round = parse_scan_report(canonical_dump(scan_report_to_json(r)));
    CHECK(round.findings.size() == 7);
    CHECK(round.host_id == HostId{"web"});
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(round.findings[i].cve_id == r.findings[i].cve_id);
      CHECK(round.findings[i].vuln_id == r.findings[i].vuln_id);
    }
  }

  TEST_CASE("zero findings keep host metadata") {
    const auto r = parse_scan_report(
        R"({"host_id": "db", "scan_time": "2026-01-01T00:00:00Z", "os": "Ubuntu", "findings": []})");
    CHECK(r.findings.empty());
    CHECK(r.os == "Ubuntu");
  }

  TEST_CASE("malformed CVE names the finding index") {
    try {
      parse_scan_report(R"({"host_id": "x", "scan_time": "2026-01-01T00:00:00Z", "findings": [
          {"port": 80, "cve_id": "CVE-2016-8740"}, {"port": 80, "cve_id": "OOPS"}]})");
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
      CHECK(e.subject() == "findings[1]");
    }
  }

  TEST_CASE("report structure errors") {
    CHECK_THROWS_AS(parse_scan_report(R"({"scan_time": "2026-01-01T00:00:00Z", "findings": []})"), Error);
    CHECK_THROWS_AS(parse_scan_report(R"({"host_id": "x", "scan_time": "yesterday", "findings": []})"), Error);
    CHECK_THROWS_AS(parse_scan_report(R"({"host_id": "x", "scan_time": "2026-01-01T00:00:00Z",
        "findings": [{"port": 99999, "cve_id": "CVE-2016-8740"}]})"),
                    Error);
  }

  TEST_CASE("score_vulnerability default map") {
    auto s = score_vulnerability({7.5, 10.0, 3.6});
    CHECK(s.probability == 1.0);
    CHECK(s.risk == doctest::Approx(3.6).epsilon(1e-15));
    CHECK(s.cvss == 7.5);
    s = score_vulnerability({5.0, 0.0, 5.0});
    CHECK(s.probability == 0.0);
    CHECK(s.risk == 0.0);
    // Pure: same input, same output.
    CHECK(score_vulnerability({6.4, 8.6, 6.4}).risk == score_vulnerability({6.4, 8.6, 6.4}).risk);
  }

  TEST_CASE("base-score preset reproduces fixture rows") {
    const auto nvd = fixtures::nvd_snapshot();
    const auto s = score_vulnerability(nvd.entries.at("CVE-2016-8740"), ScoringConfig::base_score());
    CHECK(s.probability == doctest::Approx(0.5));
    CHECK(s.risk == doctest::Approx(1.45));
  }

  TEST_CASE("NVD snapshot validation") {
    CHECK(parse_nvd_snapshot(R"({"meta": "ignored", "CVE-2020-0001": {"cvss_base": 1, "exploitability": 2, "impact": 3}})")
              .entries.size() == 1);
    CHECK(parse_nvd_snapshot(R"({"entries": {"CVE-2020-0001": {"cvss_base": 1, "exploitability": 2, "impact": 3}}})")
              .entries.size() == 1);
    CHECK_THROWS_AS(
        parse_nvd_snapshot(R"({"CVE-2020-0001": {"cvss_base": 11, "exploitability": 2, "impact": 3}})"), Error);
    CHECK_THROWS_AS(parse_nvd_snapshot(R"({"CVE-2020-0001": {"cvss_base": 1, "impact": 3}})"), Error);
    CHECK(fixtures::nvd_snapshot().entries.size() == 19);
  }

  TEST_CASE("fixture descriptors") {
    CHECK(descriptor_report("scans/testbed2/streamer.json").findings.size() == 6);
    const auto empty = fixture_scan(Json::object());
    CHECK(empty.findings.empty());
    CHECK(empty.host_id.empty());
    // Deterministic.
    const auto a = scan_report_to_json(descriptor_report("scans/testbed1/app.json"));
    const auto b = scan_report_to_json(descriptor_report("scans/testbed1/app.json"));
    CHECK(a == b);
  }

  TEST_CASE("ingest twice: second pass reuses everything") {
    testutil::TempDir dir;
    Store store(dir.path());
    const auto r = descriptor_report("scans/testbed1/web.json");
    const auto first = ingest_scan(r, fixtures::nvd_snapshot(), store);
    CHECK(first.hosts_updated == 1);
    CHECK(first.vulns_added == 7);
    const auto vdb_before = testutil::slurp(store.document_path(Collection::vdb, "v1web"));
    const auto second = ingest_scan(r, fixtures::nvd_snapshot(), store);
    CHECK(second.vulns_added == 0);
    CHECK(second.vulns_reused == 7);
    CHECK(testutil::slurp(store.document_path(Collection::vdb, "v1web")) == vdb_before);
    CHECK(store.list(Collection::vdb).size() == 7);
    CHECK(store.get_host("web")->vuln_ids.size() == 7);
  }

  TEST_CASE("fixture VDB values are reused verbatim") {
    testutil::TempDir dir;
    Store store(dir.path());
    for (const auto& rec : fixtures::vdb_records()) store.put_vulnerability(rec);
    const auto s = ingest_scan(descriptor_report("scans/testbed1/web.json"), fixtures::nvd_snapshot(), store);
    CHECK(s.vulns_added == 0);
    const auto v = store.get_vulnerability("v1web");
    CHECK(v->cve_id == "CVE-2016-8740");
    CHECK(*v->probability == 0.5);
    CHECK(*v->risk == 1.45);
  }

  TEST_CASE("empty report") {
    testutil::TempDir dir;
    Store store(dir.path());
    ScanReport r;
    r.host_id = HostId{"clean"};
    const auto s = ingest_scan(r, {}, store);
    CHECK(s.hosts_updated == 1);
    CHECK(s.vulns_added == 0);
    CHECK(store.get_host("clean").has_value());
  }

  TEST_CASE("CVE missing from VDB and NVD is stored unscored with a warning") {
    testutil::TempDir dir;
    Store store(dir.path());
    ScanReport r;
    r.host_id = HostId{"h"};
    r.findings.push_back({443, Protocol::tcp, "https", "CVE-2099-12345", ""});
    const auto s = ingest_scan(r, tiny_nvd(), store);
    CHECK(s.vulns_added == 1);
    CHECK(s.warnings.size() == 1);
    const auto v = store.get_vulnerability("CVE-2099-12345");
    REQUIRE(v);
    CHECK_FALSE(v->probability.has_value());
    CHECK_FALSE(v->scored());
  }

  TEST_CASE("findings without vuln ids dedupe by CVE across hosts") {
    testutil::TempDir dir;
    Store store(dir.path());
    for (const char* host : {"web", "was", "ftp", "streamer"}) {
      ScanReport r;
      r.host_id = HostId{host};
      r.findings.push_back({22, Protocol::tcp, "ssh", "CVE-2016-6515", ""});
      ingest_scan(r, tiny_nvd(), store);
    }
    CHECK(store.list(Collection::vdb) == std::vector<std::string>{"CVE-2016-6515"});
  }

  TEST_CASE("concurrent ingests sharing a CVE create one record") {
    testutil::TempDir dir;
    std::vector<std::thread> threads;
    std::atomic<int> added{0};
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        Store store(dir.path());
        ScanReport r;
        r.host_id = HostId{"h" + std::to_string(t)};
        r.findings.push_back({22, Protocol::tcp, "ssh", "CVE-2016-6515", ""});
        r.findings.push_back({80, Protocol::tcp, "http", "CVE-2016-8740", ""});
        added += ingest_scan(r, tiny_nvd(), store).vulns_added;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(added == 2);
    CHECK(Store(dir.path()).list(Collection::vdb).size() == 2);
  }

  TEST_CASE("fixture VDB rows") {
    const auto rows = fixtures::vdb_records();
    CHECK(rows.size() == 29);
    CHECK_THROWS_AS(parse_vdb_fixture(R"({"records": [{"vuln_id": "x", "cve_id": "BAD"}]})"), Error);
  }
}
