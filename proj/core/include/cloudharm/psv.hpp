#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cloudharm/assess.hpp"
#include "cloudharm/model.hpp"

namespace cloudharm {

class Store;

/// Quantity the prioritization tries to drive down.
///
/// exposed_risk ignores attack paths: it sums host risk over every host the
/// attacker can reach in the reachability graph. It does not collapse when a
/// single-vulnerability host on every path is patched, which makes it rank
/// per-host patches rather than path cuts.
enum class PsvObjective { sum_risk, max_risk, or_probability, max_probability, exposed_risk };

std::string_view to_string(PsvObjective objective) noexcept;
PsvObjective parse_objective(std::string_view text);

double objective_value(const Harm& model, const AggregationConfig& config, PsvObjective objective,
                       std::size_t cap = kDefaultPathCap);

struct VulnerabilityRef {
  HostId host_id;
  std::string vuln_id;
  auto operator<=>(const VulnerabilityRef&) const = default;
};

struct PsvEntry {
  int rank = 0;
  VulnerabilityRef target;
  /// Objective reduction relative to the model left by ranks 1..rank-1.
  double objective_reduction = 0.0;
  double marginal_sum_risk_reduction = 0.0;
  double marginal_or_prob_reduction = 0.0;
};

struct PsvRanking {
  PsvObjective objective = PsvObjective::sum_risk;
  AggregationConfig config;
  bool cost_weighted = false;
  std::vector<PsvEntry> ranked;
};

/// Copy of `model` without one vulnerability instance. Throws Error{usage}
/// when the instance does not exist.
Harm without_vulnerability(const Harm& model, const VulnerabilityRef& ref);

/// All (host, vuln) instances, sorted.
std::vector<VulnerabilityRef> vulnerability_instances(const Harm& model);

/// Greedy exhaustive ranking: at every step each remaining instance is
/// removed in turn, the objective re-evaluated, and the instance with the
/// largest reduction (per unit attack cost, when any cost is present) is
/// taken. Ties go to the larger raw reduction, then to (host_id, vuln_id).
PsvRanking rank_psv_es(const Harm& model, int k, const AggregationConfig& config = {},
                       PsvObjective objective = PsvObjective::sum_risk, std::size_t cap = kDefaultPathCap);

struct SubsetResult {
  std::vector<VulnerabilityRef> removed;
  double objective_after = 0.0;
  double reduction = 0.0;
};

inline constexpr std::size_t kMaxSubsetInstances = 15;

/// Best subset of exactly `size` instances by objective reduction, found by
/// enumerating all subsets. Limited to models with at most 15 instances.
SubsetResult best_subset_es(const Harm& model, std::size_t size, const AggregationConfig& config = {},
                            PsvObjective objective = PsvObjective::sum_risk);

/// suite[0] is the baseline; suite[i] follows removal of ranks 1..i. When a
/// store is given, each intermediate model is persisted with parent lineage
/// (the base must already be stored).
std::vector<MetricSuite> patch_trajectory(const Harm& model, const PsvRanking& ranking,
                                          const AggregationConfig& config = {}, Store* store = nullptr);

/// Trajectory along an arbitrary removal order.
std::vector<MetricSuite> patch_trajectory(const Harm& model, const std::vector<VulnerabilityRef>& order,
                                          const AggregationConfig& config = {});

/// Trapezoid-free area: sum of sum_risk over all trajectory steps.
double sum_risk_area(const std::vector<MetricSuite>& trajectory);

Json psv_to_json(const PsvRanking& ranking, std::string_view model_id);
Json trajectory_to_json(const std::vector<MetricSuite>& trajectory);
/// Header: step,sum_risk,max_risk,or_prob,max_prob
std::string trajectory_csv(const std::vector<MetricSuite>& trajectory);

}  // namespace cloudharm
