#include "cloudharm/whatif.hpp"

#include <algorithm>

#include "cloudharm/error.hpp"
#include "cloudharm/store.hpp"

namespace cloudharm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string step_string(const Json& step, const char* key, std::size_t index) {
  auto it = step.find(key);
  if (it == step.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw ModificationError(index, "step " + std::to_string(index) + ": missing string field '" + key + "'", key);
  }
  return it->get<std::string>();
}

PortSet step_ports(const Json& obj, std::size_t index) {
  auto it = obj.find("ports");
  if (it == obj.end() || it->is_null()) return {PortSpec{}};
  try {
    return ports_from_json(*it, "ports");
  } catch (const Error& e) {
    throw ModificationError(index, "step " + std::to_string(index) + ": " + e.what(), e.subject());
  }
}

mod::AddEdge edge_from(const Json& obj, std::size_t index) {
  return {HostId{step_string(obj, "src", index)}, HostId{step_string(obj, "dst", index)}, step_ports(obj, index)};
}

Json edge_to(const mod::AddEdge& e) {
  return {{"src", e.src.value}, {"dst", e.dst.value}, {"ports", ports_to_json(e.ports)}};
}

[[noreturn]] void unresolved(std::size_t step, const std::string& what, const std::string& subject) {
  throw ModificationError(step, "step " + std::to_string(step) + ": " + what, subject);
}

const VulnerabilityRecord* find_record(const Harm& m, std::string_view vuln_id) {
  for (const auto& [host, vulns] : m.lower) {
    for (const auto& v : vulns) {
      if (v.vuln_id == vuln_id) return &v;
    }
  }
  return nullptr;
}

void apply_edge(Harm& m, const mod::AddEdge& e, std::size_t step) {
  if (!m.upper.nodes.contains(e.src)) unresolved(step, "unknown edge source '" + e.src.value + "'", e.src.value);
  if (!m.upper.nodes.contains(e.dst)) unresolved(step, "unknown edge target '" + e.dst.value + "'", e.dst.value);
  if (e.src == e.dst) unresolved(step, "self-loop on '" + e.src.value + "'", e.src.value);
  if (is_attacker(e.dst)) unresolved(step, "edges into ATTACKER are not allowed", e.src.value);
  if (e.ports.empty()) m.upper.add_edge(e.src, e.dst, PortSpec{});
  for (const auto& p : e.ports) m.upper.add_edge(e.src, e.dst, p);
}

void require_host(const Harm& m, const HostId& h, std::size_t step) {
  if (is_attacker(h) || !m.upper.nodes.contains(h)) unresolved(step, "unknown host '" + h.value + "'", h.value);
}

}  // namespace

ModificationSet modifications_from_json(const Json& doc) {
  const Json* steps = &doc;
  if (doc.is_object() && doc.contains("mods")) steps = &doc["mods"];
  if (!steps->is_array()) throw Error(ErrorKind::parse, "modification set must be a JSON array", "mods");

  ModificationSet out;
  for (std::size_t i = 0; i < steps->size(); ++i) {
    const auto& s = (*steps)[i];
    if (!s.is_object()) throw ModificationError(i, "step " + std::to_string(i) + ": expected an object", "op");
    const auto op = step_string(s, "op", i);
    try {
      if (op == "remove_vulnerability") {
        out.emplace_back(mod::RemoveVulnerability{HostId{step_string(s, "host", i)}, step_string(s, "vuln_id", i)});
      } else if (op == "add_vulnerability") {
        if (!s.contains("vulnerability")) unresolved(i, "missing 'vulnerability'", "vulnerability");
        out.emplace_back(mod::AddVulnerability{HostId{step_string(s, "host", i)},
                                               vulnerability_from_json(s["vulnerability"], "vulnerability")});
      } else if (op == "remove_edge") {
        out.emplace_back(mod::RemoveEdge{HostId{step_string(s, "src", i)}, HostId{step_string(s, "dst", i)}});
      } else if (op == "add_edge") {
        out.emplace_back(edge_from(s, i));
      } else if (op == "remove_host") {
        out.emplace_back(mod::RemoveHost{HostId{step_string(s, "host", i)}});
      } else if (op == "add_host") {
        mod::AddHost add;
        if (!s.contains("host")) unresolved(i, "missing 'host'", "host");
        Json host = s["host"];
        if (host.is_object() && !host.contains("vuln_ids")) host["vuln_ids"] = Json::array();
        add.host = host_record_from_json(host, "host");
        if (auto it = s.find("vulnerabilities"); it != s.end() && !it->is_null()) {
          if (!it->is_array()) unresolved(i, "'vulnerabilities' must be an array", "vulnerabilities");
          for (std::size_t j = 0; j < it->size(); ++j) {
            add.vulnerabilities.push_back(
                vulnerability_from_json((*it)[j], "vulnerabilities[" + std::to_string(j) + "]"));
          }
        }
        if (auto it = s.find("edges"); it != s.end() && !it->is_null()) {
          if (!it->is_array()) unresolved(i, "'edges' must be an array", "edges");
          for (const auto& e : *it) add.edges.push_back(edge_from(e, i));
        }
        out.emplace_back(std::move(add));
      } else if (op == "set_targets") {
        auto it = s.find("targets");
        if (it == s.end() || !it->is_array()) unresolved(i, "'targets' must be an array", "targets");
        mod::SetTargets st;
        for (const auto& t : *it) {
          if (!t.is_string()) unresolved(i, "targets must be strings", "targets");
          st.targets.insert(HostId{t.get<std::string>()});
        }
        out.emplace_back(std::move(st));
      } else {
        unresolved(i, "unknown op '" + op + "'", op);
      }
    } catch (const ModificationError&) {
      throw;
    } catch (const Error& e) {
      throw ModificationError(i, "step " + std::to_string(i) + ": " + e.what(), e.subject());
    }
  }
  return out;
}

ModificationSet parse_modifications(std::string_view text) {
  return modifications_from_json(parse_json_text(text, "modification set"));
}

Json modifications_to_json(const ModificationSet& mods) {
  Json out = Json::array();
  for (const auto& m : mods) {
    out.push_back(std::visit(
        overloaded{
            [](const mod::RemoveVulnerability& x) -> Json {
              return {{"op", "remove_vulnerability"}, {"host", x.host.value}, {"vuln_id", x.vuln_id}};
            },
            [](const mod::AddVulnerability& x) -> Json {
              return {{"op", "add_vulnerability"}, {"host", x.host.value}, {"vulnerability", vulnerability_to_json(x.record)}};
            },
            [](const mod::RemoveEdge& x) -> Json {
              return {{"op", "remove_edge"}, {"src", x.src.value}, {"dst", x.dst.value}};
            },
            [](const mod::AddEdge& x) -> Json {
              Json j = edge_to(x);
              j["op"] = "add_edge";
              return j;
            },
            [](const mod::RemoveHost& x) -> Json { return {{"op", "remove_host"}, {"host", x.host.value}}; },
            [](const mod::AddHost& x) -> Json {
              Json vulns = Json::array();
              for (const auto& v : x.vulnerabilities) vulns.push_back(vulnerability_to_json(v));
              Json edges = Json::array();
              for (const auto& e : x.edges) edges.push_back(edge_to(e));
              return {{"op", "add_host"},
                      {"host", host_record_to_json(x.host)},
                      {"vulnerabilities", std::move(vulns)},
                      {"edges", std::move(edges)}};
            },
            [](const mod::SetTargets& x) -> Json {
              Json t = Json::array();
              for (const auto& h : x.targets) t.push_back(h.value);
              return {{"op", "set_targets"}, {"targets", std::move(t)}};
            },
        },
        m));
  }
  return out;
}

Harm apply_modifications(const Harm& base, const ModificationSet& mods, std::string label) {
  Harm m = base;
  m.parent_id = base.model_id;
  m.model_id = make_model_id();
  m.created_at = now_rfc3339();
  m.label = std::move(label);

  for (std::size_t step = 0; step < mods.size(); ++step) {
    std::visit(
        overloaded{
            [&](const mod::RemoveVulnerability& x) {
              auto it = m.lower.find(x.host);
              if (it == m.lower.end()) unresolved(step, "unknown host '" + x.host.value + "'", x.host.value);
              auto& vulns = it->second;
              auto v = std::find_if(vulns.begin(), vulns.end(), [&](const auto& r) { return r.vuln_id == x.vuln_id; });
              if (v == vulns.end()) {
                unresolved(step, "host '" + x.host.value + "' has no vulnerability '" + x.vuln_id + "'", x.vuln_id);
              }
              vulns.erase(v);
            },
            [&](const mod::AddVulnerability& x) {
              require_host(m, x.host, step);
              auto& vulns = m.lower[x.host];
              if (std::any_of(vulns.begin(), vulns.end(), [&](const auto& r) { return r.vuln_id == x.record.vuln_id; })) {
                unresolved(step, "host '" + x.host.value + "' already has '" + x.record.vuln_id + "'",
                           x.record.vuln_id);
              }
              vulns.push_back(x.record);
            },
            [&](const mod::RemoveEdge& x) {
              if (m.upper.edges.erase({x.src, x.dst}) == 0) {
                unresolved(step, "no edge " + x.src.value + " -> " + x.dst.value, x.src.value + "->" + x.dst.value);
              }
            },
            [&](const mod::AddEdge& x) { apply_edge(m, x, step); },
            [&](const mod::RemoveHost& x) {
              require_host(m, x.host, step);
              m.upper.nodes.erase(x.host);
              std::erase_if(m.upper.edges, [&](const auto& e) { return e.first.first == x.host || e.first.second == x.host; });
              m.lower.erase(x.host);
              m.targets.erase(x.host);
            },
            [&](const mod::AddHost& x) {
              const auto& id = x.host.host_id;
              if (id.empty() || is_attacker(id)) unresolved(step, "invalid host id '" + id.value + "'", id.value);
              if (m.upper.nodes.contains(id)) unresolved(step, "host '" + id.value + "' already exists", id.value);
              std::vector<VulnerabilityRecord> vulns = x.vulnerabilities;
              for (const auto& vid : x.host.vuln_ids) {
                if (std::any_of(vulns.begin(), vulns.end(), [&](const auto& r) { return r.vuln_id == vid; })) continue;
                const auto* rec = find_record(m, vid);
                if (!rec) unresolved(step, "vulnerability '" + vid + "' is not present in the model", vid);
                vulns.push_back(*rec);
              }
              m.upper.nodes.insert(id);
              m.lower[id] = std::move(vulns);
              for (const auto& e : x.edges) apply_edge(m, e, step);
            },
            [&](const mod::SetTargets& x) {
              for (const auto& t : x.targets) require_host(m, t, step);
              m.targets = x.targets;
            },
        },
        mods[step]);
  }

  canonicalize(m);
  if (auto violations = validate_harm(m); !violations.empty()) {
    throw Error(ErrorKind::validation, "modified model is invalid: " + violations.front(), violations.front());
  }
  return m;
}

Harm apply_modifications(Store& store, const Harm& base, const ModificationSet& mods, std::string label) {
  Harm variant = apply_modifications(base, mods, std::move(label));
  store.put_harm(variant);
  return variant;
}

ComparisonReport compare_reports(const AssessmentReport& baseline, const AssessmentReport& variant) {
  if (!(baseline.config == variant.config)) {
    throw Error(ErrorKind::usage,
                "cannot compare assessments made with different gates (" + to_string(baseline.config) + " vs " +
                    to_string(variant.config) + ")",
                "config");
  }
  ComparisonReport r;
  r.baseline_id = baseline.model_id;
  r.variant_id = variant.model_id;
  r.baseline_label = baseline.label;
  r.variant_label = variant.label;
  r.config = baseline.config;
  r.baseline_paths = baseline.metrics.path_count;
  r.variant_paths = variant.metrics.path_count;
  const auto a = metric_rows(baseline.metrics);
  const auto b = metric_rows(variant.metrics);
  for (std::size_t i = 0; i < a.size(); ++i) {
    MetricDelta d;
    d.key = a[i].key;
    d.label = a[i].label;
    d.baseline = a[i].value;
    d.variant = b[i].value;
    d.delta = d.variant - d.baseline;
    if (d.baseline != 0.0) d.pct_change = d.delta / d.baseline * 100.0;
    r.rows.push_back(std::move(d));
  }
  return r;
}

ComparisonReport compare(const Harm& baseline, const Harm& variant, const AggregationConfig& config) {
  return compare_reports(assess(baseline, config), assess(variant, config));
}

Json comparison_to_json(const ComparisonReport& report) {
  Json metrics = Json::object();
  for (const auto& row : report.rows) {
    metrics[row.key] = {{"label", row.label},
                        {"baseline", row.baseline},
                        {"variant", row.variant},
                        {"delta", row.delta},
                        {"pct_change", row.pct_change ? Json(*row.pct_change) : Json(nullptr)}};
  }
  return {{"baseline_id", report.baseline_id},
          {"variant_id", report.variant_id},
          {"baseline_label", report.baseline_label},
          {"variant_label", report.variant_label},
          {"config", config_to_json(report.config)},
          {"gates", to_string(report.config)},
          {"metrics", std::move(metrics)},
          {"paths_count", {{"baseline", report.baseline_paths}, {"variant", report.variant_paths}}},
          {"modifications", report.modifications}};
}

std::string comparison_table(const ComparisonReport& report) {
  std::size_t width = 7;
  for (const auto& r : report.rows) width = std::max(width, r.label.size());
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::string out = "Baseline " + report.baseline_id + " (" + report.baseline_label + ") vs variant " +
                    report.variant_id + " (" + report.variant_label + "), gates " + to_string(report.config) + "\n";
  out += pad("Metrics", width + 2) + pad("Initial", 14) + pad("Modified", 14) + "Delta\n";
  out.append(width + 2 + 14 + 14 + 12, '-');
  out += '\n';
  for (const auto& r : report.rows) {
    out += pad(r.label, width + 2) + pad(format_metric(r.baseline), 14) + pad(format_metric(r.variant), 14) +
           format_metric(r.delta) + "\n";
  }
  return out;
}

WhatIfSession::WhatIfSession(Store& store, std::string base_id, AggregationConfig config)
    : store_(store), base_id_(std::move(base_id)), config_(config) {
  load_base();
}

Harm WhatIfSession::load_base() const { return store_.require_harm(base_id_); }

ComparisonReport WhatIfSession::propose(const ModificationSet& mods) const {
  const Harm base = load_base();
  Harm variant = apply_modifications(base, mods, "preview");
  variant.model_id = "preview";
  auto report = compare(base, variant, config_);
  report.modifications = modifications_to_json(mods);
  return report;
}

std::string WhatIfSession::commit(const ModificationSet& mods, std::string label,
                                  std::optional<std::size_t> expected_children) {
  auto result = commit_variant(store_, base_id_, mods, std::move(label), config_, expected_children);
  base_id_ = result.variant_id;
  return base_id_;
}

std::vector<std::string> WhatIfSession::history() const { return lineage(store_, base_id_); }

CommitResult commit_variant(Store& store, std::string_view base_id, const ModificationSet& mods, std::string label,
                            const AggregationConfig& config, std::optional<std::size_t> expected_children) {
  CommitResult result;
  store.with_key_lock(Collection::harm_objects, base_id, [&] {
    const Harm base = store.require_harm(base_id);
    if (expected_children) {
      const auto actual = children_of(store, base_id).size();
      if (actual != *expected_children) {
        throw Error(ErrorKind::conflict,
                    "model '" + std::string(base_id) + "' has " + std::to_string(actual) + " children, expected " +
                        std::to_string(*expected_children),
                    std::string(base_id));
      }
    }
    const Harm variant = apply_modifications(store, base, mods, std::move(label));
    result.variant_id = variant.model_id;
    result.report = compare(base, variant, config);
    result.report.modifications = modifications_to_json(mods);
  });
  return result;
}

}  // namespace cloudharm
