#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cloudharm/assess.hpp"
#include "cloudharm/model.hpp"

namespace cloudharm {

class Store;

namespace mod {

struct RemoveVulnerability {
  HostId host;
  std::string vuln_id;
};

struct AddVulnerability {
  HostId host;
  VulnerabilityRecord record;
};

struct RemoveEdge {
  HostId src;
  HostId dst;
};

struct AddEdge {
  HostId src;
  HostId dst;
  PortSet ports;
};

struct RemoveHost {
  HostId host;
};

/// New host with its own vulnerability records plus vuln_ids resolved
/// against records already present in the model (same image, same CVEs).
struct AddHost {
  HostRecord host;
  std::vector<VulnerabilityRecord> vulnerabilities;
  std::vector<AddEdge> edges;
};

struct SetTargets {
  std::set<HostId> targets;
};

}  // namespace mod

using Modification = std::variant<mod::RemoveVulnerability, mod::AddVulnerability, mod::RemoveEdge, mod::AddEdge,
                                  mod::RemoveHost, mod::AddHost, mod::SetTargets>;

/// Ordered script; later steps may refer to hosts added by earlier ones.
using ModificationSet = std::vector<Modification>;

/// Wire format: JSON array of objects tagged by "op" (see docs/formats.md).
ModificationSet modifications_from_json(const Json& doc);
ModificationSet parse_modifications(std::string_view text);
Json modifications_to_json(const ModificationSet& mods);

/// Applies the script to a copy of `base`. The result gets a fresh model id,
/// parent_id = base.model_id, and `label`. Unresolvable steps raise
/// ModificationError with the step index; an invalid end state (for example
/// no targets left) raises Error{validation}.
Harm apply_modifications(const Harm& base, const ModificationSet& mods, std::string label = "modified");

/// As above, then persists the variant.
Harm apply_modifications(Store& store, const Harm& base, const ModificationSet& mods, std::string label = "modified");

struct MetricDelta {
  std::string key;
  std::string label;
  double baseline = 0.0;
  double variant = 0.0;
  double delta = 0.0;                // variant - baseline
  std::optional<double> pct_change;  // nullopt when baseline is 0
};

struct ComparisonReport {
  std::string baseline_id;
  std::string variant_id;
  std::string baseline_label;
  std::string variant_label;
  AggregationConfig config;
  std::vector<MetricDelta> rows;
  std::size_t baseline_paths = 0;
  std::size_t variant_paths = 0;
  Json modifications = Json::array();
};

ComparisonReport compare(const Harm& baseline, const Harm& variant, const AggregationConfig& config = {});

/// Compares two finished assessments. Throws Error{usage} if they were
/// computed under different configs.
ComparisonReport compare_reports(const AssessmentReport& baseline, const AssessmentReport& variant);

Json comparison_to_json(const ComparisonReport& report);
/// Metrics | Initial | Modified | Delta table.
std::string comparison_table(const ComparisonReport& report);

/// Interactive Phase-2 loop over a stored base model. propose() is a pure
/// preview; commit() persists a variant and moves the session onto it.
class WhatIfSession {
 public:
  WhatIfSession(Store& store, std::string base_id, AggregationConfig config = {});

  const std::string& base_id() const noexcept { return base_id_; }
  const AggregationConfig& config() const noexcept { return config_; }

  ComparisonReport propose(const ModificationSet& mods) const;

  /// Persists the variant. When `expected_children` is given, the commit
  /// fails with Error{conflict} unless the base currently has exactly that
  /// many children (compare-and-set on lineage).
  std::string commit(const ModificationSet& mods, std::string label,
                     std::optional<std::size_t> expected_children = std::nullopt);

  /// Lineage from the current base back to the root model.
  std::vector<std::string> history() const;

 private:
  Harm load_base() const;

  Store& store_;
  std::string base_id_;
  AggregationConfig config_;
};

/// Shared by the CLI and the service: commit + comparison against the base.
struct CommitResult {
  std::string variant_id;
  ComparisonReport report;
};

CommitResult commit_variant(Store& store, std::string_view base_id, const ModificationSet& mods, std::string label,
                            const AggregationConfig& config = {},
                            std::optional<std::size_t> expected_children = std::nullopt);

}  // namespace cloudharm
