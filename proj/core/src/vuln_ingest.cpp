#include "cloudharm/vuln_ingest.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "cloudharm/error.hpp"
#include "cloudharm/store.hpp"

namespace cloudharm {

namespace {

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::parse, where + ": " + what, where);
}

std::string idx(std::string_view base, std::size_t i) { return std::string(base) + "[" + std::to_string(i) + "]"; }

std::string string_or(const Json& obj, const char* key, const std::string& fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) parse_fail(where + "." + key, "expected a string");
  return it->get<std::string>();
}

std::uint16_t port_of(const Json& obj, const std::string& where) {
  auto it = obj.find("port");
  if (it == obj.end() || !it->is_number_integer()) parse_fail(where + ".port", "expected an integer port");
  const auto p = it->get<std::int64_t>();
  if (p < 0 || p > 65535) parse_fail(where + ".port", "port outside [0, 65535]");
  return static_cast<std::uint16_t>(p);
}

Protocol protocol_of(const Json& obj, const std::string& where) {
  const auto text = string_or(obj, "protocol", "tcp", where);
  auto p = parse_protocol(text);
  if (!p) parse_fail(where + ".protocol", "unknown protocol '" + text + "'");
  return *p;
}

double score_field(const Json& obj, const char* key, const std::string& where, double lo, double hi) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) parse_fail(where + "." + key, "expected a number");
  const double v = it->get<double>();
  if (!(v >= lo && v <= hi)) parse_fail(where + "." + key, "score outside range");
  return v;
}

}  // namespace

bool is_cve_id(std::string_view s) {
  static const std::regex re(R"(^CVE-\d{4}-\d{4,}$)");
  return std::regex_match(s.begin(), s.end(), re);
}

ScanReport parse_scan_report(std::string_view text) {
  const Json root = parse_json_text(text, "scan report");
  if (!root.is_object()) parse_fail("document", "expected an object");

  ScanReport r;
  r.host_id = HostId{string_or(root, "host_id", "", "")};
  if (r.host_id.empty()) parse_fail("host_id", "missing or empty");
  r.scan_time = string_or(root, "scan_time", "", "");
  if (!looks_like_rfc3339(r.scan_time)) parse_fail("scan_time", "not an RFC 3339 timestamp");
  r.os = string_or(root, "os", "", "");
  r.ip = string_or(root, "ip", "", "");

  auto fit = root.find("findings");
  if (fit == root.end() || !fit->is_array()) parse_fail("findings", "expected an array");
  for (std::size_t i = 0; i < fit->size(); ++i) {
    const auto& f = (*fit)[i];
    const auto w = idx("findings", i);
    if (!f.is_object()) parse_fail(w, "expected an object");
    Finding finding;
    finding.port = port_of(f, w);
    finding.protocol = protocol_of(f, w);
    finding.service = string_or(f, "service", "", w);
    finding.cve_id = string_or(f, "cve_id", "", w);
    if (!is_cve_id(finding.cve_id)) parse_fail(w, "malformed CVE id '" + finding.cve_id + "'");
    finding.vuln_id = string_or(f, "vuln_id", finding.cve_id, w);
    r.findings.push_back(std::move(finding));
  }

  if (auto pit = root.find("open_ports"); pit != root.end() && !pit->is_null()) {
    if (!pit->is_array()) parse_fail("open_ports", "expected an array");
    for (std::size_t i = 0; i < pit->size(); ++i) {
      const auto w = idx("open_ports", i);
      const auto& p = (*pit)[i];
      if (!p.is_object()) parse_fail(w, "expected an object");
      r.open_ports.push_back({port_of(p, w), protocol_of(p, w), string_or(p, "service", "", w)});
    }
  }
  return r;
}

Json scan_report_to_json(const ScanReport& report) {
  Json findings = Json::array();
  for (const auto& f : report.findings) {
    findings.push_back({{"port", f.port},
                        {"protocol", to_string(f.protocol)},
                        {"service", f.service},
                        {"cve_id", f.cve_id},
                        {"vuln_id", f.vuln_id}});
  }
  Json ports = Json::array();
  for (const auto& p : report.open_ports) {
    ports.push_back({{"port", p.port}, {"protocol", to_string(p.protocol)}, {"service", p.service}});
  }
  return {{"host_id", report.host_id.value}, {"scan_time", report.scan_time}, {"os", report.os},
          {"ip", report.ip},                 {"findings", std::move(findings)}, {"open_ports", std::move(ports)}};
}

NvdSnapshot parse_nvd_snapshot(std::string_view text) {
  const Json root = parse_json_text(text, "NVD snapshot");
  if (!root.is_object()) parse_fail("document", "expected an object keyed by CVE id");
  const Json& entries = root.contains("entries") && root["entries"].is_object() ? root["entries"] : root;
  NvdSnapshot snap;
  for (const auto& [cve, v] : entries.items()) {
    if (!is_cve_id(cve)) continue;  // metadata keys
    if (!v.is_object()) parse_fail(cve, "expected an object");
    NvdEntry e;
    e.cvss_base = score_field(v, "cvss_base", cve, 0.0, 10.0);
    e.exploitability = score_field(v, "exploitability", cve, 0.0, 10.0);
    e.impact = score_field(v, "impact", cve, 0.0, 10.0);
    snap.entries.emplace(cve, e);
  }
  return snap;
}

ScoringConfig ScoringConfig::exploitability_default() {
  return {[](const NvdEntry& e) { return e.exploitability / 10.0; },
          [](const NvdEntry& e) { return e.impact; },
          [](double p, double impact) { return p * impact; }};
}

ScoringConfig ScoringConfig::base_score() {
  return {[](const NvdEntry& e) { return e.cvss_base / 10.0; },
          [](const NvdEntry& e) { return e.impact; },
          [](double p, double impact) { return p * impact; }};
}

Scores score_vulnerability(const NvdEntry& entry, const ScoringConfig& config) {
  Scores s;
  s.probability = std::clamp(config.probability(entry), 0.0, 1.0);
  s.impact = config.impact(entry);
  s.risk = config.risk(s.probability, s.impact);
  s.cvss = entry.cvss_base;
  return s;
}

IngestSummary ingest_scan(const ScanReport& report, const NvdSnapshot& nvd, Store& store,
                          const ScoringConfig& scoring) {
  if (report.host_id.empty() || is_attacker(report.host_id)) {
    throw Error(ErrorKind::validation, "scan report has an invalid host id '" + report.host_id.value + "'",
                report.host_id.value);
  }
  check_key(report.host_id.value);

  IngestSummary summary;
  HostRecord host;
  host.host_id = report.host_id;
  host.ip = report.ip;
  host.os = report.os;
  host.scan_time = report.scan_time;
  host.open_ports.insert(report.open_ports.begin(), report.open_ports.end());

  std::set<std::string> seen;
  for (const auto& f : report.findings) {
    host.open_ports.insert({f.port, f.protocol, f.service});
    const std::string key = f.vuln_id.empty() ? f.cve_id : f.vuln_id;
    check_key(key);
    if (seen.insert(key).second) host.vuln_ids.push_back(key);

    bool added = false;
    store.transactional_update(Collection::vdb, key, [&](const Json& current) -> Json {
      if (!current.is_null()) return current;
      added = true;
      VulnerabilityRecord rec;
      rec.vuln_id = key;
      rec.cve_id = f.cve_id;
      if (auto it = nvd.entries.find(f.cve_id); it != nvd.entries.end()) {
        const auto s = score_vulnerability(it->second, scoring);
        rec.probability = s.probability;
        rec.risk = s.risk;
        rec.impact = s.impact;
        rec.cvss = s.cvss;
      }
      return vulnerability_to_json(rec);
    });
    if (added) {
      ++summary.vulns_added;
      if (!nvd.entries.contains(f.cve_id)) {
        summary.warnings.push_back(f.cve_id + " is absent from the VDB and the NVD snapshot; stored unscored");
      }
    } else {
      ++summary.vulns_reused;
    }
  }

  store.put_host(host);
  summary.hosts_updated = 1;
  return summary;
}

ScanReport fixture_scan(const Json& descriptor) {
  if (!descriptor.is_object()) parse_fail("descriptor", "expected an object");
  ScanReport r;
  r.host_id = HostId{string_or(descriptor, "host_id", "", "descriptor")};
  r.os = string_or(descriptor, "os", "", "descriptor");
  r.ip = string_or(descriptor, "ip", "", "descriptor");
  r.scan_time = string_or(descriptor, "scan_time", "1970-01-01T00:00:00Z", "descriptor");

  auto sit = descriptor.find("services");
  if (sit == descriptor.end() || sit->is_null()) return r;
  if (!sit->is_array()) parse_fail("descriptor.services", "expected an array");
  for (std::size_t i = 0; i < sit->size(); ++i) {
    const auto& svc = (*sit)[i];
    const auto w = idx("descriptor.services", i);
    const auto port = port_of(svc, w);
    const auto proto = protocol_of(svc, w);
    const auto name = string_or(svc, "name", "", w);
    auto cit = svc.find("cves");
    if (cit == svc.end() || cit->empty()) {
      r.open_ports.push_back({port, proto, name});
      continue;
    }
    if (!cit->is_array()) parse_fail(w + ".cves", "expected an array");
    for (std::size_t j = 0; j < cit->size(); ++j) {
      const auto& c = (*cit)[j];
      const auto cw = idx(w + ".cves", j);
      Finding f{port, proto, name, {}, {}};
      if (c.is_string()) {
        f.cve_id = c.get<std::string>();
      } else if (c.is_object()) {
        f.cve_id = string_or(c, "cve_id", "", cw);
        f.vuln_id = string_or(c, "vuln_id", "", cw);
      } else {
        parse_fail(cw, "expected a CVE id or object");
      }
      if (!is_cve_id(f.cve_id)) parse_fail(cw, "malformed CVE id '" + f.cve_id + "'");
      if (f.vuln_id.empty()) f.vuln_id = f.cve_id;
      r.findings.push_back(std::move(f));
    }
  }
  return r;
}

std::vector<VulnerabilityRecord> parse_vdb_fixture(std::string_view text, const NvdSnapshot* nvd) {
  const Json root = parse_json_text(text, "VDB fixture");
  const Json* rows = &root;
  if (root.is_object()) {
    auto it = root.find("records");
    if (it == root.end()) parse_fail("records", "missing field");
    rows = &*it;
  }
  if (!rows->is_array()) parse_fail("records", "expected an array");
  std::vector<VulnerabilityRecord> out;
  for (std::size_t i = 0; i < rows->size(); ++i) {
    const auto w = idx("records", i);
    auto rec = vulnerability_from_json((*rows)[i], w);
    if (!is_cve_id(rec.cve_id)) parse_fail(w + ".cve_id", "malformed CVE id '" + rec.cve_id + "'");
    const auto& row = (*rows)[i];
    if (nvd) {
      if (auto it = nvd->entries.find(rec.cve_id); it != nvd->entries.end()) {
        if (!row.contains("impact") || row["impact"].is_null()) rec.impact = it->second.impact;
        if (!row.contains("cvss") || row["cvss"].is_null()) rec.cvss = it->second.cvss_base;
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace cloudharm
