#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cloudharm/model.hpp"

namespace cloudharm {

class Store;

/// Lower-layer gate combining the vulnerabilities of one host.
enum class ProbabilityGate { or_gate, max_gate };
enum class RiskGate { sum, max };

/// Path probability is always the product of host probabilities; system
/// probability and risk are reported under both OR/MAX and SUM/MAX.
struct AggregationConfig {
  ProbabilityGate host_prob_gate = ProbabilityGate::max_gate;
  RiskGate host_risk_gate = RiskGate::sum;

  bool operator==(const AggregationConfig&) const = default;
};

/// "<prob>:<risk>", e.g. "max:sum".
std::string to_string(const AggregationConfig& config);
/// Accepts "or:sum", "max:max", ... Throws Error{usage} otherwise.
AggregationConfig parse_gates(std::string_view text);
Json config_to_json(const AggregationConfig& config);

inline constexpr std::size_t kDefaultPathCap = 1'000'000;

struct MetricSuite {
  std::size_t number_of_hosts = 0;
  double sum_risk = 0.0;
  double max_risk = 0.0;
  double or_probability = 0.0;
  double max_probability = 0.0;
  double mean_path_length = 0.0;
  std::size_t mode_path_length = 0;
  double stddev_path_length = 0.0;
  std::size_t shortest_path_length = 0;
  double density = 0.0;

  std::size_t path_count = 0;
  bool zero_paths = true;

  bool operator==(const MetricSuite&) const = default;
};

/// One row per reported metric, in report order.
struct MetricRow {
  std::string_view key;    // JSON field name
  std::string_view label;  // table row label
  double value;
};
std::vector<MetricRow> metric_rows(const MetricSuite& m);

/// Assembles a model from NDB/HDB/VDB (hosts in NDB order, each joined to its
/// HDB vulnerability ids and then to VDB records), stamps a fresh id and
/// stores it in harm_objects. Dangling vulnerability ids raise Error{build}
/// listing all of them.
Harm build_harm_from_store(Store& store, const std::set<HostId>& targets, std::string label);

/// Every simple path from ATTACKER to a target whose hosts all carry at least
/// one vulnerability, sorted lexicographically by host sequence. More than
/// `cap` paths raises Error{resource}.
std::vector<AttackPath> enumerate_attack_paths(const Harm& model, std::size_t cap = kDefaultPathCap);

/// Empty sets yield 0. Unscored vulnerabilities count as 0.
double host_probability(std::span<const VulnerabilityRecord> vulns, ProbabilityGate gate);
double host_risk(std::span<const VulnerabilityRecord> vulns, RiskGate gate);

MetricSuite compute_metrics(const Harm& model, const AggregationConfig& config = {},
                            std::size_t cap = kDefaultPathCap);

/// Same as compute_metrics but over an already enumerated path list.
MetricSuite metrics_from_paths(const Harm& model, std::span<const AttackPath> paths,
                               const AggregationConfig& config);

struct UnscoredVulnerability {
  HostId host;
  std::string vuln_id;
  std::string cve_id;
};

struct AssessmentReport {
  std::string model_id;
  std::string label;
  AggregationConfig config;
  MetricSuite metrics;
  std::vector<UnscoredVulnerability> unscored;
};

AssessmentReport assess(const Harm& model, const AggregationConfig& config = {}, std::size_t cap = kDefaultPathCap);

Json assessment_to_json(const AssessmentReport& report);
/// Canonical JSON text; the CLI and the HTTP service both emit exactly this.
std::string assessment_json_text(const AssessmentReport& report);
/// Two-column Metrics/Value table.
std::string assessment_table(const AssessmentReport& report);

/// Formats a metric the way the tables print it (six significant digits).
std::string format_metric(double value);

}  // namespace cloudharm
