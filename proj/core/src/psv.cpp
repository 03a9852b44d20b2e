#include "cloudharm/psv.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <map>
#include <set>

#include "cloudharm/error.hpp"
#include "cloudharm/store.hpp"

namespace cloudharm {

namespace {

// Reductions computed along different removal orders differ in the last few
// ulps; treat those as ties so the documented tie-break decides.
bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

double exposed_risk(const Harm& model, RiskGate gate) {
  std::map<HostId, std::vector<HostId>> adj;
  for (const auto& [key, ports] : model.upper.edges) adj[key.first].push_back(key.second);
  std::set<HostId> seen{kAttacker};
  std::deque<HostId> queue{kAttacker};
  double total = 0.0;
  while (!queue.empty()) {
    const auto cur = queue.front();
    queue.pop_front();
    if (!is_attacker(cur)) {
      if (auto it = model.lower.find(cur); it != model.lower.end()) total += host_risk(it->second, gate);
    }
    for (const auto& next : adj[cur]) {
      if (seen.insert(next).second) queue.push_back(next);
    }
  }
  return total;
}

bool any_cost(const Harm& model) {
  for (const auto& [host, vulns] : model.lower) {
    for (const auto& v : vulns) {
      if (v.attack_cost) return true;
    }
  }
  return false;
}

double cost_of(const Harm& model, const VulnerabilityRef& ref) {
  const auto& vulns = model.lower.at(ref.host_id);
  for (const auto& v : vulns) {
    if (v.vuln_id == ref.vuln_id) return v.attack_cost.value_or(1.0);
  }
  return 1.0;
}

}  // namespace

std::string_view to_string(PsvObjective objective) noexcept {
  switch (objective) {
    case PsvObjective::sum_risk: return "sum_risk";
    case PsvObjective::max_risk: return "max_risk";
    case PsvObjective::or_probability: return "or_probability";
    case PsvObjective::max_probability: return "max_probability";
    case PsvObjective::exposed_risk: return "exposed_risk";
  }
  return "sum_risk";
}

PsvObjective parse_objective(std::string_view text) {
  for (auto o : {PsvObjective::sum_risk, PsvObjective::max_risk, PsvObjective::or_probability,
                 PsvObjective::max_probability, PsvObjective::exposed_risk}) {
    if (text == to_string(o)) return o;
  }
  throw Error(ErrorKind::usage, "unknown PSV objective '" + std::string(text) + "'", std::string(text));
}

double objective_value(const Harm& model, const AggregationConfig& config, PsvObjective objective,
                       std::size_t cap) {
  if (objective == PsvObjective::exposed_risk) return exposed_risk(model, config.host_risk_gate);
  const auto m = compute_metrics(model, config, cap);
  switch (objective) {
    case PsvObjective::sum_risk: return m.sum_risk;
    case PsvObjective::max_risk: return m.max_risk;
    case PsvObjective::or_probability: return m.or_probability;
    case PsvObjective::max_probability: return m.max_probability;
    case PsvObjective::exposed_risk: break;
  }
  return m.sum_risk;
}

Harm without_vulnerability(const Harm& model, const VulnerabilityRef& ref) {
  Harm copy = model;
  auto it = copy.lower.find(ref.host_id);
  if (it != copy.lower.end()) {
    auto& vulns = it->second;
    auto v = std::find_if(vulns.begin(), vulns.end(), [&](const auto& r) { return r.vuln_id == ref.vuln_id; });
    if (v != vulns.end()) {
      vulns.erase(v);
      return copy;
    }
  }
  throw Error(ErrorKind::usage, "no vulnerability " + ref.vuln_id + " on host " + ref.host_id.value,
              ref.host_id.value + "/" + ref.vuln_id);
}

std::vector<VulnerabilityRef> vulnerability_instances(const Harm& model) {
  std::vector<VulnerabilityRef> out;
  for (const auto& [host, vulns] : model.lower) {
    for (const auto& v : vulns) out.push_back({host, v.vuln_id});
  }
  std::sort(out.begin(), out.end());
  return out;
}

PsvRanking rank_psv_es(const Harm& model, int k, const AggregationConfig& config, PsvObjective objective,
                       std::size_t cap) {
  if (k <= 0) throw Error(ErrorKind::usage, "k must be positive, got " + std::to_string(k), "k");
  const auto total = model.vulnerability_count();
  if (static_cast<std::size_t>(k) > total) {
    throw Error(ErrorKind::usage,
                "k = " + std::to_string(k) + " exceeds the " + std::to_string(total) + " vulnerability instances",
                "k");
  }

  PsvRanking ranking;
  ranking.objective = objective;
  ranking.config = config;
  ranking.cost_weighted = any_cost(model);

  Harm current = model;
  double current_value = objective_value(current, config, objective, cap);
  for (int step = 1; step <= k; ++step) {
    struct Candidate {
      VulnerabilityRef ref;
      double reduction;
      double score;
      Harm after;
      double after_value;
    };
    std::optional<Candidate> best;
    for (const auto& ref : vulnerability_instances(current)) {
      Harm after = without_vulnerability(current, ref);
      const double after_value = objective_value(after, config, objective, cap);
      const double reduction = current_value - after_value;
      const double score = ranking.cost_weighted ? reduction / cost_of(current, ref) : reduction;
      bool better = !best;
      if (best) {
        if (!nearly_equal(score, best->score)) {
          better = score > best->score;
        } else if (!nearly_equal(reduction, best->reduction)) {
          better = reduction > best->reduction;
        }
        // otherwise the earlier (smaller) ref stands
      }
      if (better) best = Candidate{ref, reduction, score, std::move(after), after_value};
    }

    const auto before = compute_metrics(current, config, cap);
    const auto after = compute_metrics(best->after, config, cap);
    ranking.ranked.push_back(PsvEntry{step, best->ref, best->reduction, before.sum_risk - after.sum_risk,
                                      before.or_probability - after.or_probability});
    current = std::move(best->after);
    current_value = best->after_value;
  }
  return ranking;
}

SubsetResult best_subset_es(const Harm& model, std::size_t size, const AggregationConfig& config,
                            PsvObjective objective) {
  const auto refs = vulnerability_instances(model);
  if (refs.size() > kMaxSubsetInstances) {
    throw Error(ErrorKind::usage,
                "subset search is limited to " + std::to_string(kMaxSubsetInstances) + " vulnerability instances",
                std::to_string(refs.size()));
  }
  if (size > refs.size()) throw Error(ErrorKind::usage, "subset size exceeds instance count", "size");

  const double baseline = objective_value(model, config, objective);
  SubsetResult best;
  bool found = false;
  const unsigned n = static_cast<unsigned>(refs.size());
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != size) continue;
    Harm candidate = model;
    std::vector<VulnerabilityRef> removed;
    for (unsigned i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        candidate = without_vulnerability(candidate, refs[i]);
        removed.push_back(refs[i]);
      }
    }
    const double value = objective_value(candidate, config, objective);
    if (!found || (value < best.objective_after && !nearly_equal(value, best.objective_after))) {
      found = true;
      best.removed = std::move(removed);
      best.objective_after = value;
    }
  }
  best.reduction = baseline - best.objective_after;
  return best;
}

std::vector<MetricSuite> patch_trajectory(const Harm& model, const std::vector<VulnerabilityRef>& order,
                                          const AggregationConfig& config) {
  std::vector<MetricSuite> out{compute_metrics(model, config)};
  Harm current = model;
  for (const auto& ref : order) {
    current = without_vulnerability(current, ref);
    out.push_back(compute_metrics(current, config));
  }
  return out;
}

std::vector<MetricSuite> patch_trajectory(const Harm& model, const PsvRanking& ranking,
                                          const AggregationConfig& config, Store* store) {
  std::vector<MetricSuite> out{compute_metrics(model, config)};
  Harm current = model;
  for (const auto& entry : ranking.ranked) {
    Harm next = without_vulnerability(current, entry.target);
    if (store) {
      next.parent_id = current.model_id;
      next.model_id = make_model_id();
      next.created_at = now_rfc3339();
      next.label = "psv-step-" + std::to_string(entry.rank) + " (" + entry.target.vuln_id + ")";
      store->put_harm(next);
    }
    out.push_back(compute_metrics(next, config));
    current = std::move(next);
  }
  return out;
}

double sum_risk_area(const std::vector<MetricSuite>& trajectory) {
  double area = 0.0;
  for (const auto& m : trajectory) area += m.sum_risk;
  return area;
}

Json psv_to_json(const PsvRanking& ranking, std::string_view model_id) {
  Json ranked = Json::array();
  for (const auto& e : ranking.ranked) {
    ranked.push_back({{"rank", e.rank},
                      {"vuln_id", e.target.vuln_id},
                      {"host_id", e.target.host_id.value},
                      {"objective_reduction", e.objective_reduction},
                      {"marginal_sum_risk_reduction", e.marginal_sum_risk_reduction},
                      {"marginal_or_prob_reduction", e.marginal_or_prob_reduction}});
  }
  return {{"model_id", std::string(model_id)},
          {"objective", to_string(ranking.objective)},
          {"gates", to_string(ranking.config)},
          {"cost_weighted", ranking.cost_weighted},
          {"ranked", std::move(ranked)}};
}

Json trajectory_to_json(const std::vector<MetricSuite>& trajectory) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& m = trajectory[i];
    rows.push_back({{"step", i},
                    {"sum_risk", m.sum_risk},
                    {"max_risk", m.max_risk},
                    {"or_prob", m.or_probability},
                    {"max_prob", m.max_probability},
                    {"paths_count", m.path_count}});
  }
  return rows;
}

std::string trajectory_csv(const std::vector<MetricSuite>& trajectory) {
  // Shortest round-trip number form, same as the JSON output.
  auto num = [](double v) { return Json(v).dump(); };
  std::string out = "step,sum_risk,max_risk,or_prob,max_prob\n";
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& m = trajectory[i];
    out += std::to_string(i) + "," + num(m.sum_risk) + "," + num(m.max_risk) + "," + num(m.or_probability) + "," +
           num(m.max_probability) + "\n";
  }
  return out;
}

}  // namespace cloudharm
