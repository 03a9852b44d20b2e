#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace cloudharm {

using Json = nlohmann::json;

struct HostId {
  std::string value;

  HostId() = default;
  explicit HostId(std::string v) : value(std::move(v)) {}

  bool empty() const noexcept { return value.empty(); }
  auto operator<=>(const HostId&) const = default;
};

/// The distinguished attacker entry node. It is a member of every
/// ReachabilityGraph's node set and never a host in the lower layer.
inline const HostId kAttacker{"ATTACKER"};

inline bool is_attacker(const HostId& id) { return id == kAttacker; }

enum class Protocol { tcp, udp, any };

std::string_view to_string(Protocol p) noexcept;
std::optional<Protocol> parse_protocol(std::string_view s) noexcept;

struct PortRange {
  std::uint16_t low = 0;
  std::uint16_t high = 65535;
  auto operator<=>(const PortRange&) const = default;
};

struct PortSpec {
  Protocol protocol = Protocol::any;
  PortRange range;
  auto operator<=>(const PortSpec&) const = default;
};

/// Sorted by (protocol, low); overlapping or adjacent ranges of one protocol
/// are merged.
using PortSet = std::vector<PortSpec>;

void merge_into(PortSet& set, const PortSpec& spec);

using EdgeKey = std::pair<HostId, HostId>;

/// Upper HARM layer. Plain data: invariants are checked by validate_harm so
/// that a parsed-but-broken document can still be inspected.
struct ReachabilityGraph {
  std::set<HostId> nodes{kAttacker};
  std::map<EdgeKey, PortSet> edges;

  bool operator==(const ReachabilityGraph&) const = default;

  /// Adds both endpoints when missing. Self-loops are ignored.
  void add_edge(const HostId& src, const HostId& dst, const PortSpec& spec);
  bool has_edge(const HostId& src, const HostId& dst) const;

  /// Hosts excluding the attacker.
  std::size_t host_count() const;

  /// Non-attacker edges only.
  std::size_t internal_edge_count() const;
};

struct VulnerabilityRecord {
  std::string vuln_id;
  std::string cve_id;
  std::optional<double> probability;  // nullopt: score unknown
  std::optional<double> risk;         // nullopt: score unknown
  double impact = 0.0;
  double cvss = 0.0;
  std::optional<double> attack_cost;

  bool scored() const noexcept { return probability.has_value() && risk.has_value(); }
  bool operator==(const VulnerabilityRecord&) const = default;
};

struct OpenPort {
  std::uint16_t port = 0;
  Protocol protocol = Protocol::tcp;
  std::string service;
  auto operator<=>(const OpenPort&) const = default;
};

struct HostRecord {
  HostId host_id;
  std::string ip;
  std::string os;
  std::set<OpenPort> open_ports;
  std::vector<std::string> vuln_ids;
  std::string scan_time;

  bool operator==(const HostRecord&) const = default;
};

/// Two-layer model: reachability graph plus per-host vulnerability lists.
/// Vulnerability lists are kept sorted by vuln_id (see canonicalize).
struct Harm {
  std::string model_id;
  std::optional<std::string> parent_id;
  std::string created_at;
  std::string label;
  ReachabilityGraph upper;
  std::map<HostId, std::vector<VulnerabilityRecord>> lower;
  std::set<HostId> targets;

  bool operator==(const Harm&) const = default;

  std::size_t vulnerability_count() const;
};

struct AttackPath {
  std::vector<HostId> hosts;

  std::size_t length() const noexcept { return hosts.size(); }
  auto operator<=>(const AttackPath&) const = default;
};

/// Sorts every lower-layer list by vuln_id.
void canonicalize(Harm& model);

/// Empty result iff every structural invariant holds.
std::vector<std::string> validate_harm(const Harm& model);

// Canonical document form. Keys sorted, collections sorted, doubles printed
// in shortest round-trip form, two-space indent, trailing newline.
Json harm_to_json(const Harm& model);
Harm harm_from_json(const Json& doc);
std::string serialize_harm(const Harm& model);
Harm deserialize_harm(std::string_view text);

Json ports_to_json(const PortSet& ports);
PortSet ports_from_json(const Json& arr, std::string_view where);

Json graph_to_json(const ReachabilityGraph& graph);
ReachabilityGraph graph_from_json(const Json& doc, std::string_view where = "upper");

Json vulnerability_to_json(const VulnerabilityRecord& v);
VulnerabilityRecord vulnerability_from_json(const Json& doc, std::string_view where = "vulnerability");

Json host_record_to_json(const HostRecord& h);
HostRecord host_record_from_json(const Json& doc, std::string_view where = "host");

Json path_to_json(const AttackPath& path);

/// Canonical text for any document the project writes.
std::string canonical_dump(const Json& doc);

/// Parses text into JSON, converting syntax errors to Error{parse} with a
/// line/column position.
Json parse_json_text(std::string_view text, std::string_view what);

/// RFC 3339 UTC timestamp with microseconds.
std::string now_rfc3339();
bool looks_like_rfc3339(std::string_view s);

/// Time-ordered unique model id.
std::string make_model_id();

}  // namespace cloudharm
