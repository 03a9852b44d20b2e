#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>

#include "cloudharm/model.hpp"

namespace testutil {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "cloudharm-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline cloudharm::VulnerabilityRecord vuln(std::string id, double p, double r) {
  cloudharm::VulnerabilityRecord v;
  v.vuln_id = std::move(id);
  v.cve_id = "CVE-2020-0001";
  v.probability = p;
  v.risk = r;
  return v;
}

struct HostSpec {
  std::string id;
  std::initializer_list<std::pair<double, double>> vulns;
};

// Model over the given hosts and edges ("ATTACKER" names the entry node).
inline cloudharm::Harm make_model(std::initializer_list<HostSpec> hosts,
                                  std::initializer_list<std::pair<const char*, const char*>> edges,
                                  std::initializer_list<const char*> targets) {
  using namespace cloudharm;
  Harm m;
  m.model_id = "m-test";
  m.created_at = "2026-01-01T00:00:00.000000Z";
  m.label = "test";
  for (const auto& h : hosts) {
    m.upper.nodes.insert(HostId{h.id});
    auto& list = m.lower[HostId{h.id}];
    int i = 0;
    for (const auto& [p, r] : h.vulns) list.push_back(vuln("v" + std::to_string(++i) + h.id, p, r));
  }
  for (const auto& [a, b] : edges) m.upper.add_edge(HostId{a}, HostId{b}, PortSpec{});
  for (const auto* t : targets) m.targets.insert(HostId{t});
  canonicalize(m);
  return m;
}

// ATTACKER -> A -> B, target B; A: p=0.5 r=2.0, B: p=0.4 r=1.0.
inline cloudharm::Harm chain_model() {
  return make_model({{"A", {{0.5, 2.0}}}, {"B", {{0.4, 1.0}}}}, {{"ATTACKER", "A"}, {"A", "B"}}, {"B"});
}

}  // namespace testutil
