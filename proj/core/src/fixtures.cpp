#include "cloudharm/fixtures.hpp"

#include <algorithm>
#include <chrono>

#include "cloudharm/assess.hpp"
#include "cloudharm/error.hpp"
#include "cloudharm/sg_ingest.hpp"
#include "cloudharm/store.hpp"

namespace cloudharm::fixtures {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kEmbedded[];
extern const std::size_t kEmbeddedCount;
}  // namespace detail

namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

std::vector<std::string> files() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < detail::kEmbeddedCount; ++i) out.emplace_back(detail::kEmbedded[i].first);
  return out;
}

std::optional<std::string_view> file(std::string_view relative_path) {
  for (std::size_t i = 0; i < detail::kEmbeddedCount; ++i) {
    if (detail::kEmbedded[i].first == relative_path) return detail::kEmbedded[i].second;
  }
  return std::nullopt;
}

std::string_view require_file(std::string_view relative_path) {
  if (auto f = file(relative_path)) return *f;
  throw Error(ErrorKind::not_found, "no embedded fixture '" + std::string(relative_path) + "'",
              std::string(relative_path));
}

std::vector<std::string> testbeds() { return {"testbed1", "testbed1-modified", "testbed2"}; }

Testbed testbed(std::string_view name) {
  Testbed t;
  t.name = std::string(name);
  t.sg_file = "sg/" + t.name + ".json";
  if (name == "testbed1" || name == "testbed1-modified") {
    t.targets = {HostId{"db"}};
  } else if (name == "testbed2") {
    t.targets = {HostId{"bucket"}};
  } else {
    throw Error(ErrorKind::usage, "unknown testbed '" + t.name + "' (expected testbed1, testbed1-modified or testbed2)",
                t.name);
  }
  const std::string prefix = "scans/" + t.name + "/";
  for (const auto& f : files()) {
    if (f.starts_with(prefix)) t.scan_files.push_back(f);
  }
  return t;
}

NvdSnapshot nvd_snapshot() { return parse_nvd_snapshot(require_file("nvd/snapshot.json")); }

std::vector<VulnerabilityRecord> vdb_records() {
  const auto nvd = nvd_snapshot();
  return parse_vdb_fixture(require_file("vdb/appendix.json"), &nvd);
}

InstallResult install(Store& store, std::string_view name) {
  const auto tb = testbed(name);
  InstallResult result;
  Stopwatch clock;

  const auto doc = parse_sg_export(require_file(tb.sg_file));
  auto rg = build_reachability_graph(doc);
  result.timings.push_back({"Parsing and build Reachability Graph", clock.lap()});
  store.put_reachability(rg.graph);
  result.timings.push_back({"Insert and Update Database", clock.lap()});
  result.warnings = std::move(rg.warnings);

  std::vector<ScanReport> reports;
  for (const auto& f : tb.scan_files) reports.push_back(fixture_scan(parse_json_text(require_file(f), f)));
  result.timings.push_back({"Scan report parsing", clock.lap()});

  const auto nvd = nvd_snapshot();
  for (const auto& rec : parse_vdb_fixture(require_file("vdb/appendix.json"), &nvd)) {
    store.transactional_update(Collection::vdb, rec.vuln_id, [&](const Json& current) {
      return current.is_null() ? vulnerability_to_json(rec) : current;
    });
  }
  double vdb_seconds = clock.lap();

  double host_seconds = 0.0;
  for (const auto& r : reports) {
    auto s = ingest_scan(r, nvd, store);
    host_seconds += clock.lap();
    result.ingest.hosts_updated += s.hosts_updated;
    result.ingest.vulns_added += s.vulns_added;
    result.ingest.vulns_reused += s.vulns_reused;
    for (auto& w : s.warnings) result.warnings.push_back(std::move(w));
  }
  result.timings.push_back({"Insert and Update Host(AMI) Database", host_seconds});
  result.timings.push_back({"Insert Vulnerability Database(Including NVD parsing)", vdb_seconds});

  result.model_id = build_harm_from_store(store, tb.targets, "initial").model_id;
  result.timings.push_back({"Build HARM", clock.lap()});
  return result;
}

Harm build(std::string_view name) {
  const auto tb = testbed(name);
  const auto nvd = nvd_snapshot();
  std::map<std::string, VulnerabilityRecord> vdb;
  for (auto& rec : parse_vdb_fixture(require_file("vdb/appendix.json"), &nvd)) vdb.emplace(rec.vuln_id, rec);

  Harm model;
  model.model_id = make_model_id();
  model.created_at = now_rfc3339();
  model.label = "initial";
  model.targets = tb.targets;
  model.upper = build_reachability_graph(parse_sg_export(require_file(tb.sg_file))).graph;
  for (const auto& h : model.upper.nodes) {
    if (!is_attacker(h)) model.lower[h];
  }
  for (const auto& f : tb.scan_files) {
    const auto report = fixture_scan(parse_json_text(require_file(f), f));
    auto& vulns = model.lower[report.host_id];
    for (const auto& finding : report.findings) {
      const auto key = finding.vuln_id.empty() ? finding.cve_id : finding.vuln_id;
      if (std::any_of(vulns.begin(), vulns.end(), [&](const auto& v) { return v.vuln_id == key; })) continue;
      vulns.push_back(vdb.at(key));
    }
  }
  canonicalize(model);
  return model;
}

}  // namespace cloudharm::fixtures
