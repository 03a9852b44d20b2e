#include "cloudharm/assess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "cloudharm/error.hpp"
#include "cloudharm/store.hpp"

namespace cloudharm {

std::string to_string(const AggregationConfig& config) {
  std::string out = config.host_prob_gate == ProbabilityGate::or_gate ? "or" : "max";
  out += ":";
  out += config.host_risk_gate == RiskGate::sum ? "sum" : "max";
  return out;
}

AggregationConfig parse_gates(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorKind::usage, "gates must look like <or|max>:<sum|max>, got '" + std::string(text) + "'",
                std::string(text));
  }
  const auto prob = text.substr(0, colon);
  const auto risk = text.substr(colon + 1);
  AggregationConfig c;
  if (prob == "or") {
    c.host_prob_gate = ProbabilityGate::or_gate;
  } else if (prob == "max") {
    c.host_prob_gate = ProbabilityGate::max_gate;
  } else {
    throw Error(ErrorKind::usage, "unknown probability gate '" + std::string(prob) + "'", std::string(prob));
  }
  if (risk == "sum") {
    c.host_risk_gate = RiskGate::sum;
  } else if (risk == "max") {
    c.host_risk_gate = RiskGate::max;
  } else {
    throw Error(ErrorKind::usage, "unknown risk gate '" + std::string(risk) + "'", std::string(risk));
  }
  return c;
}

Json config_to_json(const AggregationConfig& config) {
  return {{"host_prob_gate", config.host_prob_gate == ProbabilityGate::or_gate ? "OR" : "MAX"},
          {"host_risk_gate", config.host_risk_gate == RiskGate::sum ? "SUM" : "MAX"},
          {"path_prob", "PRODUCT"},
          {"system_prob", Json::array({"OR", "MAX"})},
          {"system_risk", Json::array({"SUM", "MAX"})}};
}

std::vector<MetricRow> metric_rows(const MetricSuite& m) {
  return {
      {"number_of_hosts", "Number of hosts", static_cast<double>(m.number_of_hosts)},
      {"sum_risk", "Sum Risk", m.sum_risk},
      {"max_risk", "Max Risk", m.max_risk},
      {"or_probability", "Or Probability of attack success", m.or_probability},
      {"max_probability", "Max Probability of attack success", m.max_probability},
      {"mean_path_length", "Mean of attack path lengths", m.mean_path_length},
      {"mode_path_length", "Mode of attack path lengths", static_cast<double>(m.mode_path_length)},
      {"stddev_path_length", "Standard Deviation of attack path lengths", m.stddev_path_length},
      {"shortest_path_length", "Shortest attack path length", static_cast<double>(m.shortest_path_length)},
      {"density", "Density", m.density},
  };
}

Harm build_harm_from_store(Store& store, const std::set<HostId>& targets, std::string label) {
  auto graph = store.get_reachability();
  if (!graph) throw Error(ErrorKind::build, "NDB holds no reachability graph; run ingest-sg first", "ndb");

  Harm model;
  model.model_id = make_model_id();
  model.created_at = now_rfc3339();
  model.label = std::move(label);
  model.targets = targets;

  std::vector<std::string> dangling;
  for (const auto& host : graph->nodes) {
    if (is_attacker(host)) continue;
    auto& vulns = model.lower[host];
    const auto record = store.get_host(host.value);
    if (!record) continue;
    for (const auto& id : record->vuln_ids) {
      if (auto v = store.get_vulnerability(id)) {
        vulns.push_back(std::move(*v));
      } else {
        dangling.push_back(host.value + "/" + id);
      }
    }
  }
  model.upper = std::move(*graph);

  if (!dangling.empty()) {
    std::string list;
    for (const auto& d : dangling) list += (list.empty() ? "" : ", ") + d;
    throw Error(ErrorKind::build, "HDB references vulnerabilities absent from VDB: " + list, list);
  }
  canonicalize(model);
  if (auto violations = validate_harm(model); !violations.empty()) {
    throw Error(ErrorKind::validation, "assembled model is invalid: " + violations.front(), violations.front());
  }
  store.put_harm(model);
  return model;
}

namespace {

class PathEnumerator {
 public:
  PathEnumerator(const Harm& model, std::size_t cap) : model_(model), cap_(cap) {
    for (const auto& [key, ports] : model.upper.edges) {
      const auto& [src, dst] = key;
      if (src == dst || is_attacker(dst) || !exploitable(dst)) continue;
      adjacency_[src].push_back(&dst);
    }
  }

  std::vector<AttackPath> run() {
    auto it = adjacency_.find(kAttacker);
    if (it != adjacency_.end()) {
      for (const HostId* first : it->second) visit(*first);
    }
    std::sort(paths_.begin(), paths_.end());
    return std::move(paths_);
  }

 private:
  bool exploitable(const HostId& h) const {
    auto it = model_.lower.find(h);
    return it != model_.lower.end() && !it->second.empty();
  }

  void visit(const HostId& host) {
    if (std::find(stack_.begin(), stack_.end(), host) != stack_.end()) return;
    stack_.push_back(host);
    if (model_.targets.contains(host)) {
      if (paths_.size() >= cap_) {
        throw Error(ErrorKind::resource,
                    "attack path count exceeds the cap of " + std::to_string(cap_) +
                        "; reduce the graph (fewer targets, merged hosts) or raise the cap",
                    std::to_string(cap_));
      }
      paths_.push_back(AttackPath{stack_});
    }
    if (auto it = adjacency_.find(host); it != adjacency_.end()) {
      for (const HostId* next : it->second) visit(*next);
    }
    stack_.pop_back();
  }

  const Harm& model_;
  std::size_t cap_;
  std::map<HostId, std::vector<const HostId*>> adjacency_;
  std::vector<HostId> stack_;
  std::vector<AttackPath> paths_;
};

}  // namespace

std::vector<AttackPath> enumerate_attack_paths(const Harm& model, std::size_t cap) {
  return PathEnumerator(model, cap).run();
}

double host_probability(std::span<const VulnerabilityRecord> vulns, ProbabilityGate gate) {
  if (vulns.empty()) return 0.0;
  if (gate == ProbabilityGate::max_gate) {
    double best = 0.0;
    for (const auto& v : vulns) best = std::max(best, v.probability.value_or(0.0));
    return best;
  }
  double fail_all = 1.0;
  for (const auto& v : vulns) fail_all *= 1.0 - v.probability.value_or(0.0);
  return 1.0 - fail_all;
}

double host_risk(std::span<const VulnerabilityRecord> vulns, RiskGate gate) {
  double acc = 0.0;
  for (const auto& v : vulns) {
    const double r = v.risk.value_or(0.0);
    acc = gate == RiskGate::sum ? acc + r : std::max(acc, r);
  }
  return acc;
}

MetricSuite metrics_from_paths(const Harm& model, std::span<const AttackPath> paths,
                               const AggregationConfig& config) {
  MetricSuite m;
  m.number_of_hosts = model.upper.host_count();
  const auto n = static_cast<double>(m.number_of_hosts);
  m.density = m.number_of_hosts < 2 ? 0.0 : static_cast<double>(model.upper.internal_edge_count()) / (n * (n - 1.0));

  m.path_count = paths.size();
  m.zero_paths = paths.empty();
  if (paths.empty()) return m;

  std::map<HostId, std::pair<double, double>> host_scores;
  for (const auto& [host, vulns] : model.lower) {
    host_scores[host] = {host_probability(vulns, config.host_prob_gate), host_risk(vulns, config.host_risk_gate)};
  }

  double none_succeed = 1.0;
  std::map<std::size_t, std::size_t> length_counts;
  double length_sum = 0.0;
  m.shortest_path_length = paths.front().length();
  for (const auto& path : paths) {
    double prob = 1.0;
    double risk = 0.0;
    for (const auto& h : path.hosts) {
      const auto it = host_scores.find(h);
      const auto [hp, hr] = it == host_scores.end() ? std::pair{0.0, 0.0} : it->second;
      prob *= hp;
      risk += hr;
    }
    m.max_probability = std::max(m.max_probability, prob);
    none_succeed *= 1.0 - prob;
    m.sum_risk += risk;
    m.max_risk = std::max(m.max_risk, risk);

    const auto len = path.length();
    ++length_counts[len];
    length_sum += static_cast<double>(len);
    m.shortest_path_length = std::min(m.shortest_path_length, len);
  }
  m.or_probability = 1.0 - none_succeed;

  const double count = static_cast<double>(paths.size());
  m.mean_path_length = length_sum / count;
  std::size_t best_count = 0;
  for (const auto& [len, c] : length_counts) {
    if (c > best_count) {  // ascending keys: ties keep the smaller length
      best_count = c;
      m.mode_path_length = len;
    }
  }
  double sq = 0.0;
  for (const auto& [len, c] : length_counts) {
    const double d = static_cast<double>(len) - m.mean_path_length;
    sq += d * d * static_cast<double>(c);
  }
  m.stddev_path_length = std::sqrt(sq / count);
  return m;
}

MetricSuite compute_metrics(const Harm& model, const AggregationConfig& config, std::size_t cap) {
  const auto paths = enumerate_attack_paths(model, cap);
  return metrics_from_paths(model, paths, config);
}

AssessmentReport assess(const Harm& model, const AggregationConfig& config, std::size_t cap) {
  AssessmentReport r;
  r.model_id = model.model_id;
  r.label = model.label;
  r.config = config;
  r.metrics = compute_metrics(model, config, cap);
  for (const auto& [host, vulns] : model.lower) {
    for (const auto& v : vulns) {
      if (!v.scored()) r.unscored.push_back({host, v.vuln_id, v.cve_id});
    }
  }
  return r;
}

Json assessment_to_json(const AssessmentReport& report) {
  Json metrics = Json::object();
  const auto& m = report.metrics;
  metrics["number_of_hosts"] = m.number_of_hosts;
  metrics["sum_risk"] = m.sum_risk;
  metrics["max_risk"] = m.max_risk;
  metrics["or_probability"] = m.or_probability;
  metrics["max_probability"] = m.max_probability;
  metrics["mean_path_length"] = m.mean_path_length;
  metrics["mode_path_length"] = m.mode_path_length;
  metrics["stddev_path_length"] = m.stddev_path_length;
  metrics["shortest_path_length"] = m.shortest_path_length;
  metrics["density"] = m.density;

  Json unscored = Json::array();
  for (const auto& u : report.unscored) {
    unscored.push_back({{"host", u.host.value}, {"vuln_id", u.vuln_id}, {"cve_id", u.cve_id}});
  }
  return {{"model_id", report.model_id},
          {"label", report.label},
          {"config", config_to_json(report.config)},
          {"gates", to_string(report.config)},
          {"metrics", std::move(metrics)},
          {"paths_count", m.path_count},
          {"zero_paths_flag", m.zero_paths},
          {"unscored_vulnerabilities", std::move(unscored)}};
}

std::string assessment_json_text(const AssessmentReport& report) {
  return canonical_dump(assessment_to_json(report));
}

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string assessment_table(const AssessmentReport& report) {
  const auto rows = metric_rows(report.metrics);
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.label.size());

  std::string out;
  auto line = [&](std::string_view a, std::string_view b) {
    out += a;
    out.append(width + 2 - a.size(), ' ');
    out += b;
    out += '\n';
  };
  out += "Model " + report.model_id + " (" + report.label + "), gates " + to_string(report.config) + "\n";
  line("Metrics", "Value");
  out.append(width + 2 + 12, '-');
  out += '\n';
  for (const auto& r : rows) line(r.label, format_metric(r.value));
  out += "Attack paths: " + std::to_string(report.metrics.path_count);
  if (report.metrics.zero_paths) out += " (no attack path reaches a target)";
  out += '\n';
  if (!report.unscored.empty()) {
    out += "Unscored vulnerabilities (counted as 0):";
    for (const auto& u : report.unscored) out += " " + u.host.value + "/" + u.vuln_id;
    out += '\n';
  }
  return out;
}

}  // namespace cloudharm
