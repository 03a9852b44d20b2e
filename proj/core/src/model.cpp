#include "cloudharm/model.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>
#include <regex>

#include "cloudharm/error.hpp"

namespace cloudharm {

std::string_view to_string(Protocol p) noexcept {
  switch (p) {
    case Protocol::tcp: return "tcp";
    case Protocol::udp: return "udp";
    case Protocol::any: return "any";
  }
  return "any";
}

std::optional<Protocol> parse_protocol(std::string_view s) noexcept {
  if (s == "tcp" || s == "6") return Protocol::tcp;
  if (s == "udp" || s == "17") return Protocol::udp;
  if (s == "any" || s == "-1" || s == "all") return Protocol::any;
  return std::nullopt;
}

void merge_into(PortSet& set, const PortSpec& spec) {
  set.push_back(spec);
  std::sort(set.begin(), set.end());
  PortSet merged;
  for (const auto& p : set) {
    if (!merged.empty() && merged.back().protocol == p.protocol &&
        static_cast<int>(p.range.low) <= static_cast<int>(merged.back().range.high) + 1) {
      merged.back().range.high = std::max(merged.back().range.high, p.range.high);
    } else {
      merged.push_back(p);
    }
  }
  set = std::move(merged);
}

void ReachabilityGraph::add_edge(const HostId& src, const HostId& dst, const PortSpec& spec) {
  if (src == dst) return;
  nodes.insert(src);
  nodes.insert(dst);
  merge_into(edges[{src, dst}], spec);
}

bool ReachabilityGraph::has_edge(const HostId& src, const HostId& dst) const {
  return edges.contains({src, dst});
}

std::size_t ReachabilityGraph::host_count() const {
  return nodes.size() - (nodes.contains(kAttacker) ? 1 : 0);
}

std::size_t ReachabilityGraph::internal_edge_count() const {
  return static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [](const auto& e) {
    return !is_attacker(e.first.first) && !is_attacker(e.first.second);
  }));
}

std::size_t Harm::vulnerability_count() const {
  std::size_t n = 0;
  for (const auto& [host, vulns] : lower) n += vulns.size();
  return n;
}

void canonicalize(Harm& model) {
  for (auto& [host, vulns] : model.lower) {
    std::sort(vulns.begin(), vulns.end(),
              [](const auto& a, const auto& b) { return a.vuln_id < b.vuln_id; });
  }
}

std::vector<std::string> validate_harm(const Harm& model) {
  std::vector<std::string> out;
  const auto& g = model.upper;

  if (model.model_id.empty()) out.push_back("model_id is empty");
  if (model.parent_id && model.parent_id->empty()) out.push_back("parent_id is present but empty");
  if (!g.nodes.contains(kAttacker)) out.push_back("upper.nodes lacks the ATTACKER node");

  for (const auto& n : g.nodes) {
    if (n.empty()) out.push_back("upper.nodes contains an empty host id");
  }
  for (const auto& [key, ports] : g.edges) {
    const auto& [src, dst] = key;
    if (!g.nodes.contains(src)) out.push_back("edge source '" + src.value + "' is not a node");
    if (!g.nodes.contains(dst)) out.push_back("edge target '" + dst.value + "' is not a node");
    if (src == dst) out.push_back("self-loop on '" + src.value + "'");
    if (is_attacker(dst)) out.push_back("ATTACKER has an inbound edge from '" + src.value + "'");
    for (const auto& p : ports) {
      if (p.range.low > p.range.high) {
        out.push_back("edge " + src.value + "->" + dst.value + " has an inverted port range");
      }
    }
  }

  for (const auto& [host, vulns] : model.lower) {
    if (is_attacker(host)) {
      out.push_back("ATTACKER appears in the lower layer");
    } else if (!g.nodes.contains(host)) {
      out.push_back("lower-layer host '" + host.value + "' is not in upper.nodes");
    }
    std::set<std::string> seen;
    for (const auto& v : vulns) {
      const std::string where = host.value + "/" + v.vuln_id;
      if (v.vuln_id.empty()) out.push_back("vulnerability on '" + host.value + "' has an empty vuln_id");
      if (!seen.insert(v.vuln_id).second) out.push_back("duplicate vulnerability " + where);
      if (v.probability && !(*v.probability >= 0.0 && *v.probability <= 1.0)) {
        out.push_back("probability of " + where + " outside [0,1]");
      }
      if (v.risk && !(*v.risk >= 0.0)) out.push_back("risk of " + where + " is negative");
      if (!(v.impact >= 0.0)) out.push_back("impact of " + where + " is negative");
      if (!(v.cvss >= 0.0 && v.cvss <= 10.0)) out.push_back("cvss of " + where + " outside [0,10]");
      if (v.attack_cost && !(*v.attack_cost > 0.0)) {
        out.push_back("attack_cost of " + where + " is not positive");
      }
    }
  }

  if (model.targets.empty()) out.push_back("targets is empty");
  for (const auto& t : model.targets) {
    if (is_attacker(t)) {
      out.push_back("ATTACKER is listed as a target");
    } else if (!g.nodes.contains(t)) {
      out.push_back("target '" + t.value + "' is not in upper.nodes");
    }
  }
  return out;
}

// --- serialization -------------------------------------------------------

namespace {

[[noreturn]] void fail(std::string_view where, std::string_view what) {
  throw Error(ErrorKind::parse, std::string(where) + ": " + std::string(what), std::string(where));
}

std::string join(std::string_view a, std::string_view b) {
  return std::string(a) + "." + std::string(b);
}

std::string at(std::string_view a, std::size_t i) {
  return std::string(a) + "[" + std::to_string(i) + "]";
}

const Json& field(const Json& doc, std::string_view key, std::string_view where) {
  if (!doc.is_object()) fail(where, "expected an object");
  auto it = doc.find(key);
  if (it == doc.end()) {
    // Top-level fields are named bare so errors read "upper", not ".upper".
    fail(where.empty() ? std::string(key) : join(where, key), "missing field");
  }
  return *it;
}

std::string path_of(std::string_view where, std::string_view key) {
  return where.empty() ? std::string(key) : join(where, key);
}

std::string get_string(const Json& doc, std::string_view key, std::string_view where) {
  const auto& v = field(doc, key, where);
  if (!v.is_string()) fail(path_of(where, key), "expected a string");
  return v.get<std::string>();
}

std::optional<double> get_optional_number(const Json& doc, std::string_view key,
                                          std::string_view where) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) fail(path_of(where, key), "expected a number or null");
  return it->get<double>();
}

std::uint16_t get_port(const Json& doc, std::string_view key, std::string_view where) {
  const auto& v = field(doc, key, where);
  if (!v.is_number_integer()) fail(path_of(where, key), "expected an integer port");
  auto p = v.get<std::int64_t>();
  if (p < 0 || p > 65535) fail(path_of(where, key), "port outside [0, 65535]");
  return static_cast<std::uint16_t>(p);
}

const Json& get_array(const Json& doc, std::string_view key, std::string_view where) {
  const auto& v = field(doc, key, where);
  if (!v.is_array()) fail(path_of(where, key), "expected an array");
  return v;
}

}  // namespace

Json ports_to_json(const PortSet& ports) {
  Json arr = Json::array();
  for (const auto& p : ports) {
    arr.push_back({{"protocol", to_string(p.protocol)}, {"from", p.range.low}, {"to", p.range.high}});
  }
  return arr;
}

PortSet ports_from_json(const Json& arr, std::string_view where) {
  if (!arr.is_array()) fail(where, "expected an array");
  PortSet out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto w = at(where, i);
    PortSpec spec;
    auto proto = parse_protocol(get_string(arr[i], "protocol", w));
    if (!proto) fail(join(w, "protocol"), "unknown protocol");
    spec.protocol = *proto;
    spec.range.low = get_port(arr[i], "from", w);
    spec.range.high = get_port(arr[i], "to", w);
    if (spec.range.low > spec.range.high) fail(w, "port range has from > to");
    merge_into(out, spec);
  }
  return out;
}

Json graph_to_json(const ReachabilityGraph& graph) {
  Json nodes = Json::array();
  for (const auto& n : graph.nodes) nodes.push_back(n.value);
  Json edges = Json::array();
  for (const auto& [key, ports] : graph.edges) {
    edges.push_back({{"src", key.first.value}, {"dst", key.second.value}, {"ports", ports_to_json(ports)}});
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

ReachabilityGraph graph_from_json(const Json& doc, std::string_view where) {
  if (!doc.is_object()) fail(where, "expected an object");
  ReachabilityGraph g;
  g.nodes.clear();
  const auto& nodes = get_array(doc, "nodes", where);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].is_string()) fail(at(join(where, "nodes"), i), "expected a string");
    g.nodes.insert(HostId{nodes[i].get<std::string>()});
  }
  const auto& edges = get_array(doc, "edges", where);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto w = at(join(where, "edges"), i);
    HostId src{get_string(edges[i], "src", w)};
    HostId dst{get_string(edges[i], "dst", w)};
    auto ports = ports_from_json(field(edges[i], "ports", w), join(w, "ports"));
    auto& slot = g.edges[{src, dst}];
    for (const auto& p : ports) merge_into(slot, p);
  }
  return g;
}

Json vulnerability_to_json(const VulnerabilityRecord& v) {
  auto opt = [](const std::optional<double>& d) { return d ? Json(*d) : Json(nullptr); };
  return {{"vuln_id", v.vuln_id}, {"cve_id", v.cve_id},       {"probability", opt(v.probability)},
          {"risk", opt(v.risk)},  {"impact", v.impact},       {"cvss", v.cvss},
          {"attack_cost", opt(v.attack_cost)}};
}

VulnerabilityRecord vulnerability_from_json(const Json& doc, std::string_view where) {
  if (!doc.is_object()) fail(where, "expected an object");
  VulnerabilityRecord v;
  v.vuln_id = get_string(doc, "vuln_id", where);
  v.cve_id = get_string(doc, "cve_id", where);
  v.probability = get_optional_number(doc, "probability", where);
  v.risk = get_optional_number(doc, "risk", where);
  v.impact = get_optional_number(doc, "impact", where).value_or(0.0);
  v.cvss = get_optional_number(doc, "cvss", where).value_or(0.0);
  v.attack_cost = get_optional_number(doc, "attack_cost", where);
  return v;
}

Json host_record_to_json(const HostRecord& h) {
  Json ports = Json::array();
  for (const auto& p : h.open_ports) {
    ports.push_back({{"port", p.port}, {"protocol", to_string(p.protocol)}, {"service", p.service}});
  }
  return {{"host_id", h.host_id.value}, {"ip", h.ip},           {"os", h.os},
          {"open_ports", std::move(ports)}, {"vuln_ids", h.vuln_ids}, {"scan_time", h.scan_time}};
}

HostRecord host_record_from_json(const Json& doc, std::string_view where) {
  if (!doc.is_object()) fail(where, "expected an object");
  HostRecord h;
  h.host_id = HostId{get_string(doc, "host_id", where)};
  h.ip = doc.value("ip", std::string{});
  h.os = doc.value("os", std::string{});
  h.scan_time = doc.value("scan_time", std::string{});
  if (doc.contains("open_ports")) {
    const auto& ports = get_array(doc, "open_ports", where);
    for (std::size_t i = 0; i < ports.size(); ++i) {
      const auto w = at(join(where, "open_ports"), i);
      OpenPort p;
      p.port = get_port(ports[i], "port", w);
      auto proto = parse_protocol(ports[i].value("protocol", std::string{"tcp"}));
      if (!proto) fail(join(w, "protocol"), "unknown protocol");
      p.protocol = *proto;
      p.service = ports[i].value("service", std::string{});
      h.open_ports.insert(std::move(p));
    }
  }
  const auto& ids = get_array(doc, "vuln_ids", where);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!ids[i].is_string()) fail(at(join(where, "vuln_ids"), i), "expected a string");
    h.vuln_ids.push_back(ids[i].get<std::string>());
  }
  return h;
}

Json path_to_json(const AttackPath& path) {
  Json hosts = Json::array();
  for (const auto& h : path.hosts) hosts.push_back(h.value);
  return {{"hosts", std::move(hosts)}, {"length", path.length()}};
}

Json harm_to_json(const Harm& model) {
  Json lower = Json::object();
  for (const auto& [host, vulns] : model.lower) {
    std::vector<const VulnerabilityRecord*> sorted;
    for (const auto& v : vulns) sorted.push_back(&v);
    std::sort(sorted.begin(), sorted.end(),
              [](auto* a, auto* b) { return a->vuln_id < b->vuln_id; });
    Json arr = Json::array();
    for (const auto* v : sorted) arr.push_back(vulnerability_to_json(*v));
    lower[host.value] = std::move(arr);
  }
  Json targets = Json::array();
  for (const auto& t : model.targets) targets.push_back(t.value);
  return {{"model_id", model.model_id},
          {"parent_id", model.parent_id ? Json(*model.parent_id) : Json(nullptr)},
          {"created_at", model.created_at},
          {"label", model.label},
          {"upper", graph_to_json(model.upper)},
          {"lower", std::move(lower)},
          {"targets", std::move(targets)}};
}

Harm harm_from_json(const Json& doc) {
  if (!doc.is_object()) fail("document", "expected an object");
  Harm m;
  m.model_id = get_string(doc, "model_id", "");
  const auto& parent = field(doc, "parent_id", "");
  if (!parent.is_null()) {
    if (!parent.is_string()) fail("parent_id", "expected a string or null");
    m.parent_id = parent.get<std::string>();
  }
  m.created_at = get_string(doc, "created_at", "");
  if (!looks_like_rfc3339(m.created_at)) fail("created_at", "not an RFC 3339 timestamp");
  m.label = get_string(doc, "label", "");
  m.upper = graph_from_json(field(doc, "upper", ""), "upper");

  const auto& lower = field(doc, "lower", "");
  if (!lower.is_object()) fail("lower", "expected an object");
  for (const auto& [host, vulns] : lower.items()) {
    const auto w = join("lower", host);
    if (!vulns.is_array()) fail(w, "expected an array");
    auto& list = m.lower[HostId{host}];
    for (std::size_t i = 0; i < vulns.size(); ++i) list.push_back(vulnerability_from_json(vulns[i], at(w, i)));
  }

  const auto& targets = get_array(doc, "targets", "");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i].is_string()) fail(at("targets", i), "expected a string");
    m.targets.insert(HostId{targets[i].get<std::string>()});
  }
  canonicalize(m);
  return m;
}

std::string canonical_dump(const Json& doc) { return doc.dump(2) + "\n"; }

std::string serialize_harm(const Harm& model) { return canonical_dump(harm_to_json(model)); }

Harm deserialize_harm(std::string_view text) { return harm_from_json(parse_json_text(text, "HARM document")); }

Json parse_json_text(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::parse,
                std::string(what) + ": syntax error at line " + std::to_string(line) + ", column " +
                    std::to_string(col) + " (offset " + std::to_string(e.byte) + ")",
                "line " + std::to_string(line));
  }
}

std::string now_rfc3339() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto secs = time_point_cast<seconds>(now);
  const auto micros = duration_cast<microseconds>(now - secs).count();
  const std::time_t t = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06ldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long>(micros));
  return buf;
}

bool looks_like_rfc3339(std::string_view s) {
  static const std::regex re(
      R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$)");
  return std::regex_match(s.begin(), s.end(), re);
}

std::string make_model_id() {
  static std::atomic<unsigned> counter{0};
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const auto ts = now_rfc3339();
  // 2026-10-17T12:34:56.123456Z -> 20261017T123456123456
  std::string compact;
  for (char c : ts) {
    if (std::isdigit(static_cast<unsigned char>(c)) || c == 'T') compact.push_back(c);
  }
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "%04x%04x", counter.fetch_add(1) & 0xffffu,
                static_cast<unsigned>(rng() & 0xffffu));
  return "m" + compact + "-" + suffix;
}

}  // namespace cloudharm
