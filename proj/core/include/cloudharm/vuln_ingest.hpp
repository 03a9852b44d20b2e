#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cloudharm/model.hpp"

namespace cloudharm {

class Store;

struct Finding {
  std::uint16_t port = 0;
  Protocol protocol = Protocol::tcp;
  std::string service;
  std::string cve_id;
  /// Local id used as the VDB key. Defaults to cve_id when the report does
  /// not assign one.
  std::string vuln_id;
};

struct ScanReport {
  HostId host_id;
  std::string scan_time;
  std::string os;
  std::string ip;
  std::vector<Finding> findings;
  /// Ports observed open without an associated finding.
  std::vector<OpenPort> open_ports;
};

struct NvdEntry {
  double cvss_base = 0.0;
  double exploitability = 0.0;
  double impact = 0.0;
};

struct NvdSnapshot {
  std::map<std::string, NvdEntry> entries;
};

bool is_cve_id(std::string_view s);

ScanReport parse_scan_report(std::string_view text);
Json scan_report_to_json(const ScanReport& report);

NvdSnapshot parse_nvd_snapshot(std::string_view text);

struct Scores {
  double probability = 0.0;
  double risk = 0.0;
  double impact = 0.0;
  double cvss = 0.0;
};

/// Pluggable mapping from NVD subscores to record scores. The default uses
/// probability = exploitability / 10, impact = impact subscore,
/// risk = probability * impact, cvss = base score.
struct ScoringConfig {
  std::function<double(const NvdEntry&)> probability;
  std::function<double(const NvdEntry&)> impact;
  std::function<double(double probability, double impact)> risk;

  static ScoringConfig exploitability_default();
  /// probability = base / 10. Reproduces most rows of the bundled appendix
  /// data, which the default does not.
  static ScoringConfig base_score();
};

Scores score_vulnerability(const NvdEntry& entry, const ScoringConfig& config = ScoringConfig::exploitability_default());

struct IngestSummary {
  int hosts_updated = 0;
  int vulns_added = 0;
  int vulns_reused = 0;
  std::vector<std::string> warnings;
};

/// Writes the host record and resolves each finding against the VDB, adding
/// a record scored from the snapshot on a miss. Each VDB lookup-or-insert is
/// a transactional update, so concurrent ingests of a shared CVE produce one
/// record.
IngestSummary ingest_scan(const ScanReport& report, const NvdSnapshot& nvd, Store& store,
                          const ScoringConfig& scoring = ScoringConfig::exploitability_default());

/// Deterministic stand-in for an external scanner: turns a host descriptor
/// (installed services and their known CVEs) into a ScanReport.
ScanReport fixture_scan(const Json& descriptor);

/// Loads VDB rows given directly as records (authoritative fixture data).
/// Missing impact/cvss fields are filled from the snapshot when available.
std::vector<VulnerabilityRecord> parse_vdb_fixture(std::string_view text, const NvdSnapshot* nvd = nullptr);

}  // namespace cloudharm
