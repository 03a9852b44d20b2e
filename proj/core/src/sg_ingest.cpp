#include "cloudharm/sg_ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <set>

#include "cloudharm/error.hpp"

namespace cloudharm {

std::uint32_t Cidr::first() const noexcept {
  if (prefix == 0) return 0;
  const std::uint32_t mask = prefix >= 32 ? 0xffffffffu : ~((1u << (32 - prefix)) - 1u);
  return address & mask;
}

std::uint32_t Cidr::last() const noexcept {
  if (prefix == 0) return 0xffffffffu;
  const std::uint32_t host_bits = prefix >= 32 ? 0u : (1u << (32 - prefix)) - 1u;
  return first() | host_bits;
}

std::string Cidr::to_string() const {
  return std::to_string(address >> 24) + "." + std::to_string((address >> 16) & 0xff) + "." +
         std::to_string((address >> 8) & 0xff) + "." + std::to_string(address & 0xff) + "/" + std::to_string(prefix);
}

std::optional<Cidr> parse_cidr(std::string_view text) {
  Cidr out;
  out.prefix = 32;
  const auto slash = text.find('/');
  std::string_view addr = text.substr(0, slash);
  if (slash != std::string_view::npos) {
    auto pfx = text.substr(slash + 1);
    int p = -1;
    auto [ptr, ec] = std::from_chars(pfx.data(), pfx.data() + pfx.size(), p);
    if (ec != std::errc{} || ptr != pfx.data() + pfx.size() || p < 0 || p > 32) return std::nullopt;
    out.prefix = p;
  }
  std::uint32_t value = 0;
  for (int octet = 0; octet < 4; ++octet) {
    const auto dot = addr.find('.');
    const auto part = addr.substr(0, dot);
    if (octet < 3 && dot == std::string_view::npos) return std::nullopt;
    if (octet == 3 && dot != std::string_view::npos) return std::nullopt;
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size() || v > 255) return std::nullopt;
    value = (value << 8) | v;
    addr = dot == std::string_view::npos ? std::string_view{} : addr.substr(dot + 1);
  }
  out.address = value;
  return out;
}

bool contains_public_address(const Cidr& cidr) {
  // Internal ranges, sorted and disjoint.
  static constexpr std::array<std::pair<std::uint32_t, std::uint32_t>, 5> internal{{
      {0x0A000000u, 0x0AFFFFFFu},  // 10/8
      {0x7F000000u, 0x7FFFFFFFu},  // 127/8
      {0xA9FE0000u, 0xA9FEFFFFu},  // 169.254/16
      {0xAC100000u, 0xAC1FFFFFu},  // 172.16/12
      {0xC0A80000u, 0xC0A8FFFFu},  // 192.168/16
  }};
  std::uint64_t cursor = cidr.first();
  const std::uint64_t end = cidr.last();
  for (const auto& [lo, hi] : internal) {
    if (hi < cursor) continue;
    if (lo > cursor) return true;  // gap before this internal range
    cursor = static_cast<std::uint64_t>(hi) + 1;
    if (cursor > end) return false;
  }
  return cursor <= end;
}

namespace {

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::parse, where + ": " + what, where);
}

std::string idx(std::string_view base, std::size_t i) { return std::string(base) + "[" + std::to_string(i) + "]"; }

std::uint16_t port_field(const Json& perm, const char* key, std::uint16_t fallback, const std::string& where) {
  auto it = perm.find(key);
  if (it == perm.end() || it->is_null()) return fallback;
  if (!it->is_number_integer()) parse_fail(where + "." + key, "expected an integer");
  const auto v = it->get<std::int64_t>();
  // AWS uses -1 for "all" on ICMP-style rules.
  if (v == -1) return fallback;
  if (v < 0 || v > 65535) parse_fail(where + "." + key, "port outside [0, 65535]");
  return static_cast<std::uint16_t>(v);
}

Cidr cidr_field(const Json& v, const std::string& where) {
  if (!v.is_string()) parse_fail(where, "expected a CIDR string");
  auto c = parse_cidr(v.get<std::string>());
  if (!c) parse_fail(where, "malformed CIDR '" + v.get<std::string>() + "'");
  return *c;
}

const Json* array_field(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  if (!it->is_array()) parse_fail(where + "." + key, "expected an array");
  return &*it;
}

}  // namespace

SecurityGroupDoc parse_sg_export(std::string_view text) {
  const Json root = parse_json_text(text, "security-group export");
  if (!root.is_object()) parse_fail("document", "expected an object");

  SecurityGroupDoc doc;
  if (const auto* groups = array_field(root, "SecurityGroups", "")) {
    for (std::size_t gi = 0; gi < groups->size(); ++gi) {
      const auto& g = (*groups)[gi];
      const auto gw = idx("SecurityGroups", gi);
      if (!g.is_object()) parse_fail(gw, "expected an object");
      auto id = g.find("GroupId");
      if (id == g.end() || !id->is_string() || id->get<std::string>().empty()) {
        parse_fail(gw + ".GroupId", "missing or empty group id");
      }
      SecurityGroup sg;
      sg.group_id = id->get<std::string>();
      if (const auto* perms = array_field(g, "IpPermissions", gw)) {
        for (std::size_t pi = 0; pi < perms->size(); ++pi) {
          const auto& perm = (*perms)[pi];
          const auto pw = gw + "." + idx("IpPermissions", pi);
          if (!perm.is_object()) parse_fail(pw, "expected an object");
          InboundRule rule;
          const auto proto_text = perm.contains("IpProtocol") && perm["IpProtocol"].is_string()
                                      ? perm["IpProtocol"].get<std::string>()
                                      : std::string("-1");
          auto proto = parse_protocol(proto_text);
          if (!proto) parse_fail(pw + ".IpProtocol", "unsupported protocol '" + proto_text + "'");
          rule.protocol = *proto;
          rule.ports.low = port_field(perm, "FromPort", 0, pw);
          rule.ports.high = port_field(perm, "ToPort", 65535, pw);
          if (rule.ports.low > rule.ports.high) parse_fail(pw, "FromPort > ToPort");
          if (const auto* ranges = array_field(perm, "IpRanges", pw)) {
            for (std::size_t ri = 0; ri < ranges->size(); ++ri) {
              const auto rw = pw + "." + idx("IpRanges", ri);
              const auto& r = (*ranges)[ri];
              if (!r.is_object() || !r.contains("CidrIp")) parse_fail(rw + ".CidrIp", "missing field");
              rule.cidr_sources.push_back(cidr_field(r["CidrIp"], rw + ".CidrIp"));
            }
          }
          if (const auto* pairs = array_field(perm, "UserIdGroupPairs", pw)) {
            for (std::size_t ri = 0; ri < pairs->size(); ++ri) {
              const auto rw = pw + "." + idx("UserIdGroupPairs", ri);
              const auto& r = (*pairs)[ri];
              if (!r.is_object() || !r.contains("GroupId") || !r["GroupId"].is_string()) {
                parse_fail(rw + ".GroupId", "missing group reference");
              }
              rule.group_sources.push_back(r["GroupId"].get<std::string>());
            }
          }
          sg.inbound.push_back(std::move(rule));
        }
      }
      doc.groups.push_back(std::move(sg));
    }
  }

  if (auto it = root.find("assignments"); it != root.end() && !it->is_null()) {
    if (!it->is_object()) parse_fail("assignments", "expected an object");
    for (const auto& [host, groups] : it->items()) {
      const auto aw = "assignments." + host;
      if (host.empty() || host == kAttacker.value) parse_fail(aw, "reserved or empty host id");
      if (!groups.is_array()) parse_fail(aw, "expected an array of group ids");
      auto& list = doc.assignments[HostId{host}];
      for (std::size_t i = 0; i < groups.size(); ++i) {
        if (!groups[i].is_string()) parse_fail(idx(aw, i), "expected a group id");
        list.push_back(groups[i].get<std::string>());
      }
    }
  }

  if (const auto* allow = array_field(root, "admin_allowlist", "")) {
    for (std::size_t i = 0; i < allow->size(); ++i) {
      doc.admin_allowlist.push_back(cidr_field((*allow)[i], idx("admin_allowlist", i)));
    }
  }

  std::set<std::string> declared;
  for (const auto& g : doc.groups) {
    if (!declared.insert(g.group_id).second) {
      throw Error(ErrorKind::parse, "duplicate security group '" + g.group_id + "'", g.group_id);
    }
  }
  for (const auto& g : doc.groups) {
    for (const auto& r : g.inbound) {
      for (const auto& ref : r.group_sources) {
        if (!declared.contains(ref)) {
          throw Error(ErrorKind::resolution,
                      "group '" + g.group_id + "' references undeclared group '" + ref + "'", ref);
        }
      }
    }
  }
  for (const auto& [host, groups] : doc.assignments) {
    for (const auto& ref : groups) {
      if (!declared.contains(ref)) {
        throw Error(ErrorKind::resolution, "host '" + host.value + "' is assigned to undeclared group '" + ref + "'",
                    ref);
      }
    }
  }
  return doc;
}

ReachabilityBuild build_reachability_graph(const SecurityGroupDoc& doc, const ReachabilityOptions& options) {
  ReachabilityBuild out;
  auto& graph = out.graph;

  std::map<std::string, std::vector<HostId>> members;
  for (const auto& [host, groups] : doc.assignments) {
    graph.nodes.insert(host);
    if (groups.empty()) out.warnings.push_back("host '" + host.value + "' is assigned to no security group");
    for (const auto& g : groups) members[g].push_back(host);
  }

  std::set<Cidr> admin(doc.admin_allowlist.begin(), doc.admin_allowlist.end());
  admin.insert(options.admin_allowlist.begin(), options.admin_allowlist.end());
  auto is_admin = [&](const Cidr& c) {
    return c.prefix == 32 && std::any_of(admin.begin(), admin.end(), [&](const Cidr& a) {
             return a.first() <= c.address && c.address <= a.last();
           });
  };

  for (const auto& group : doc.groups) {
    const auto found = members.find(group.group_id);
    if (found == members.end()) continue;
    const auto& dsts = found->second;
    for (const auto& rule : group.inbound) {
      const PortSpec spec{rule.protocol, rule.ports};
      for (const auto& cidr : rule.cidr_sources) {
        if (!options.include_admin_rules && is_admin(cidr)) continue;
        if (!contains_public_address(cidr)) continue;
        for (const auto& dst : dsts) graph.add_edge(kAttacker, dst, spec);
      }
      for (const auto& ref : rule.group_sources) {
        auto src_members = members.find(ref);
        if (src_members == members.end()) continue;
        for (const auto& src : src_members->second) {
          for (const auto& dst : dsts) {
            if (src != dst) graph.add_edge(src, dst, spec);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace cloudharm
