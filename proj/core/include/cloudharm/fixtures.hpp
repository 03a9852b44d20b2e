#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cloudharm/model.hpp"
#include "cloudharm/vuln_ingest.hpp"

namespace cloudharm {

class Store;

namespace fixtures {

/// Fixture files compiled into the library, keyed by path relative to the
/// fixtures/ directory (e.g. "sg/testbed1.json").
std::vector<std::string> files();
std::optional<std::string_view> file(std::string_view relative_path);
/// Throws Error{not_found} for unknown paths.
std::string_view require_file(std::string_view relative_path);

/// testbed1, testbed1-modified, testbed2.
std::vector<std::string> testbeds();

struct Testbed {
  std::string name;
  std::string sg_file;
  std::vector<std::string> scan_files;
  std::set<HostId> targets;
};

/// Throws Error{usage} for unknown names.
Testbed testbed(std::string_view name);

/// Wall time of one pipeline stage in seconds.
struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct InstallResult {
  std::string model_id;
  IngestSummary ingest;
  std::vector<std::string> warnings;
  std::vector<StageTiming> timings;
};

/// Runs the Phase-1 pipeline for a testbed against `store`: SG export to NDB,
/// the VDB fixture rows, one scan ingest per host, then build_harm with the
/// testbed's targets and label "initial".
InstallResult install(Store& store, std::string_view name);

/// Same model install() would persist, assembled in memory (fresh id, no
/// store). Used by tests and benchmarks.
Harm build(std::string_view name);

NvdSnapshot nvd_snapshot();
std::vector<VulnerabilityRecord> vdb_records();

}  // namespace fixtures
}  // namespace cloudharm
