#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cloudharm/model.hpp"

namespace cloudharm {

/// IPv4 CIDR block.
struct Cidr {
  std::uint32_t address = 0;
  int prefix = 0;

  std::uint32_t first() const noexcept;
  std::uint32_t last() const noexcept;
  std::string to_string() const;
  auto operator<=>(const Cidr&) const = default;
};

/// Parses "a.b.c.d/n" (a bare address means /32). Returns nullopt on
/// malformed input.
std::optional<Cidr> parse_cidr(std::string_view text);

/// True when the block contains at least one address outside RFC 1918,
/// loopback (127/8) and link-local (169.254/16).
bool contains_public_address(const Cidr& cidr);

struct InboundRule {
  Protocol protocol = Protocol::any;
  PortRange ports;
  std::vector<Cidr> cidr_sources;
  std::vector<std::string> group_sources;
};

struct SecurityGroup {
  std::string group_id;
  std::vector<InboundRule> inbound;
};

struct SecurityGroupDoc {
  std::vector<SecurityGroup> groups;
  std::map<HostId, std::vector<std::string>> assignments;
  /// Operator management sources declared in the export sidecar.
  std::vector<Cidr> admin_allowlist;
};

/// Parses the SG export format (see docs/formats.md). Syntax errors report
/// line and column; references to undeclared groups raise Error{resolution}
/// naming the reference.
SecurityGroupDoc parse_sg_export(std::string_view text);

struct ReachabilityOptions {
  /// Extra /32 management sources, merged with the document's allowlist.
  std::vector<Cidr> admin_allowlist;
  /// Keep rules whose source is an allowlisted /32 instead of skipping them.
  bool include_admin_rules = false;
};

struct ReachabilityBuild {
  ReachabilityGraph graph;
  std::vector<std::string> warnings;
};

/// Expands inbound allow rules into host-level edges. Public CIDR sources
/// connect ATTACKER to every member of the rule's group; group sources
/// connect every member of the source group to every member of the rule's
/// group, skipping self-pairs. Parallel edges merge by port-range union.
ReachabilityBuild build_reachability_graph(const SecurityGroupDoc& doc, const ReachabilityOptions& options = {});

}  // namespace cloudharm
