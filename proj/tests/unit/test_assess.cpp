#include <algorithm>
#include <random>

#include "cloudharm/assess.hpp"
#include "cloudharm/error.hpp"
#include "cloudharm/fixtures.hpp"
#include "cloudharm/psv.hpp"
#include "cloudharm/store.hpp"
#include "doctest.h"
#include "oracle.hpp"
#include "support.hpp"

using namespace cloudharm;

namespace {

Harm diamond() {
  return testutil::make_model({{"A", {{0.5, 1.0}}}, {"B", {{0.5, 1.0}}}, {"T", {{0.5, 1.0}}}},
                              {{"ATTACKER", "A"}, {"ATTACKER", "B"}, {"A", "T"}, {"B", "T"}}, {"T"});
}

const AggregationConfig kAllGates[] = {
    {ProbabilityGate::max_gate, RiskGate::sum},
    {ProbabilityGate::or_gate, RiskGate::sum},
    {ProbabilityGate::max_gate, RiskGate::max},
    {ProbabilityGate::or_gate, RiskGate::max},
};

void check_against_oracle(const Harm& m, const AggregationConfig& cfg) {
  const auto got = compute_metrics(m, cfg);
  const auto want = oracle::metrics(m, cfg.host_prob_gate == ProbabilityGate::or_gate, cfg.host_risk_gate == RiskGate::sum);
  CHECK(got.path_count == want.path_count);
  CHECK(got.number_of_hosts == want.number_of_hosts);
  CHECK(oracle::close(got.sum_risk, want.sum_risk));
  CHECK(oracle::close(got.max_risk, want.max_risk));
  CHECK(oracle::close(got.or_probability, want.or_probability));
  CHECK(oracle::close(got.max_probability, want.max_probability));
  CHECK(oracle::close(got.mean_path_length, want.mean_path_length));
  CHECK(got.mode_path_length == want.mode_path_length);
  CHECK(oracle::close(got.stddev_path_length, want.stddev_path_length));
  CHECK(got.shortest_path_length == want.shortest_path_length);
  CHECK(oracle::close(got.density, want.density));
}

// Probability and risk metrics, in a fixed order, for monotonicity checks.
std::array<double, 4> posture(const MetricSuite& s) {
  return {s.sum_risk, s.max_risk, s.or_probability, s.max_probability};
}

}  // namespace

TEST_SUITE("assess") {
  TEST_CASE("chain") {
    const auto m = testutil::chain_model();
    const auto paths = enumerate_attack_paths(m);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].hosts == std::vector<HostId>{HostId{"A"}, HostId{"B"}});
    const auto s = compute_metrics(m);
    CHECK(s.path_count == 1);
    CHECK(s.max_probability == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(s.or_probability == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(s.sum_risk == 3.0);
    CHECK(s.max_risk == 3.0);
    CHECK(s.mean_path_length == 2.0);
    CHECK(s.mode_path_length == 2);
    CHECK(s.shortest_path_length == 2);
    CHECK(s.stddev_path_length == 0.0);
    CHECK(s.density == 0.5);
    CHECK(s.number_of_hosts == 2);
    CHECK_FALSE(s.zero_paths);
  }

  TEST_CASE("diamond") {
    const auto m = diamond();
    const auto paths = enumerate_attack_paths(m);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].hosts == std::vector<HostId>{HostId{"A"}, HostId{"T"}});
    CHECK(paths[1].hosts == std::vector<HostId>{HostId{"B"}, HostId{"T"}});
    const auto s = compute_metrics(m);
    CHECK(s.or_probability == doctest::Approx(0.4375).epsilon(1e-15));
    CHECK(s.sum_risk == 4.0);
  }

  TEST_CASE("unreachable target and edgeless model") {
    auto m = testutil::make_model({{"A", {{0.5, 1.0}}}, {"T", {{0.5, 1.0}}}}, {{"ATTACKER", "A"}}, {"T"});
    CHECK(enumerate_attack_paths(m).empty());
    const auto none = testutil::make_model({{"A", {{0.5, 1.0}}}, {"T", {{0.5, 1.0}}}}, {}, {"T"});
    const auto s = compute_metrics(none);
    CHECK(s.zero_paths);
    CHECK(s.density == 0.0);
    CHECK(s.sum_risk == 0.0);
    CHECK(s.or_probability == 0.0);
    CHECK(s.shortest_path_length == 0);
  }

  TEST_CASE("hosts without vulnerabilities are not traversed") {
    const auto m = testutil::make_model({{"A", {}}, {"T", {{0.5, 1.0}}}}, {{"ATTACKER", "A"}, {"A", "T"}}, {"T"});
    CHECK(enumerate_attack_paths(m).empty());
  }

  TEST_CASE("host gates") {
    const std::vector<VulnerabilityRecord> one = {testutil::vuln("a", 0.5, 1.0)};
    CHECK(host_probability(one, ProbabilityGate::or_gate) == 0.5);
    CHECK(host_probability(one, ProbabilityGate::max_gate) == 0.5);
    const std::vector<VulnerabilityRecord> two = {testutil::vuln("a", 0.5, 1.0), testutil::vuln("b", 0.4, 2.0)};
    CHECK(host_probability(two, ProbabilityGate::or_gate) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(host_probability(two, ProbabilityGate::max_gate) == 0.5);
    CHECK(host_risk(two, RiskGate::sum) == 3.0);
    CHECK(host_risk(two, RiskGate::max) == 2.0);
    const std::vector<VulnerabilityRecord> db = {testutil::vuln("v1db", 0.43, 1.247)};
    CHECK(host_probability(db, ProbabilityGate::max_gate) == 0.43);
    CHECK(host_risk(db, RiskGate::sum) == 1.247);
    CHECK(host_probability({}, ProbabilityGate::or_gate) == 0.0);
    CHECK(host_risk({}, RiskGate::sum) == 0.0);
    auto unscored = testutil::vuln("u", 0.9, 9.0);
    unscored.probability.reset();
    unscored.risk.reset();
    const std::vector<VulnerabilityRecord> u = {unscored};
    CHECK(host_probability(u, ProbabilityGate::max_gate) == 0.0);
    CHECK(host_risk(u, RiskGate::sum) == 0.0);
  }

  TEST_CASE("gate parsing") {
    CHECK(parse_gates("or:max") == AggregationConfig{ProbabilityGate::or_gate, RiskGate::max});
    CHECK(to_string(AggregationConfig{}) == "max:sum");
    CHECK_THROWS_AS(parse_gates("and:sum"), Error);
    CHECK_THROWS_AS(parse_gates("max"), Error);
  }

  TEST_CASE("mode ties go to the shorter length") {
    // Paths: [A,T] and [B,C,T].
    const auto m = testutil::make_model({{"A", {{0.5, 1}}}, {"B", {{0.5, 1}}}, {"C", {{0.5, 1}}}, {"T", {{0.5, 1}}}},
                                        {{"ATTACKER", "A"}, {"ATTACKER", "B"}, {"A", "T"}, {"B", "C"}, {"C", "T"}}, {"T"});
    const auto s = compute_metrics(m);
    CHECK(s.path_count == 2);
    CHECK(s.mode_path_length == 2);
    CHECK(s.mean_path_length == 2.5);
    CHECK(s.stddev_path_length == 0.5);
  }

  TEST_CASE("path cap raises a resource error") {
    // Complete digraph on 7 hosts: thousands of simple paths.
    Harm m;
    m.model_id = "dense";
    m.created_at = "2026-01-01T00:00:00.000000Z";
    for (int i = 0; i < 7; ++i) {
      HostId h{"h" + std::to_string(i)};
      m.upper.nodes.insert(h);
      m.lower[h] = {testutil::vuln("v" + std::to_string(i), 0.5, 1.0)};
      m.upper.add_edge(kAttacker, h, PortSpec{});
    }
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        if (i != j) m.upper.add_edge(HostId{"h" + std::to_string(i)}, HostId{"h" + std::to_string(j)}, PortSpec{});
    m.targets = {HostId{"h6"}};
    try {
      enumerate_attack_paths(m, 100);
      FAIL("expected a resource error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::resource);
    }
    CHECK(enumerate_attack_paths(m).size() > 100);
  }

  TEST_CASE("oracle equivalence on random models") {
    for (std::uint64_t seed = 1; seed <= 150; ++seed) {
      const auto m = testgen::random_model(seed, {.acyclic = seed % 4 != 0});
      CAPTURE(seed);
      const auto want = oracle::paths(m);
      const auto got = enumerate_attack_paths(m);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].hosts == want[i]);
      for (const auto& cfg : kAllGates) check_against_oracle(m, cfg);
    }
  }

  TEST_CASE("probability bounds and path statistics") {
    for (std::uint64_t seed = 200; seed < 400; ++seed) {
      const auto m = testgen::random_model(seed, {.max_hosts = 6, .edge_chance = 0.6, .acyclic = false});
      for (const auto& cfg : kAllGates) {
        const auto s = compute_metrics(m, cfg);
        CHECK(s.or_probability >= 0.0);
        CHECK(s.or_probability <= 1.0);
        CHECK(s.max_probability >= 0.0);
        CHECK(s.max_probability <= s.or_probability + 1e-15);
        CHECK(s.max_risk <= s.sum_risk + 1e-12);
        if (s.zero_paths) continue;
        const auto paths = enumerate_attack_paths(m);
        std::size_t longest = 0;
        for (const auto& p : paths) longest = std::max(longest, p.length());
        CHECK(static_cast<double>(s.shortest_path_length) <= s.mean_path_length);
        CHECK(s.mean_path_length <= static_cast<double>(longest));
        CHECK((s.stddev_path_length == 0.0) == (s.shortest_path_length == longest));
      }
    }
  }

  TEST_CASE("monotone patching") {
    const AggregationConfig or_sum{ProbabilityGate::or_gate, RiskGate::sum};
    for (std::uint64_t seed = 500; seed < 560; ++seed) {
      const auto m = testgen::random_model(seed);
      const auto before = posture(compute_metrics(m, or_sum));
      for (const auto& ref : vulnerability_instances(m)) {
        const auto after = posture(compute_metrics(without_vulnerability(m, ref), or_sum));
        for (int i = 0; i < 4; ++i) CHECK(after[i] <= before[i] + 1e-12);
      }
    }
  }

  TEST_CASE("monotone edges") {
    for (std::uint64_t seed = 600; seed < 660; ++seed) {
      const auto m = testgen::random_model(seed, {.acyclic = false});
      const auto base = compute_metrics(m);
      for (const auto& [edge, ports] : m.upper.edges) {
        Harm cut = m;
        cut.upper.edges.erase(edge);
        const auto s = compute_metrics(cut);
        const auto a = posture(s), b = posture(base);
        for (int i = 0; i < 4; ++i) CHECK(a[i] <= b[i] + 1e-12);
        if (!s.zero_paths) CHECK(s.shortest_path_length >= base.shortest_path_length);
      }
    }
  }

  TEST_CASE("enumeration is sorted and deterministic") {
    for (std::uint64_t seed = 700; seed < 720; ++seed) {
      const auto m = testgen::random_model(seed, {.acyclic = false});
      const auto a = enumerate_attack_paths(m);
      CHECK(std::is_sorted(a.begin(), a.end()));
      CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
      CHECK(a == enumerate_attack_paths(m));
    }
  }

  TEST_CASE("testbed-1 fixture") {
    const auto m = fixtures::build("testbed1");
    const auto paths = enumerate_attack_paths(m);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].hosts == std::vector<HostId>{HostId{"web"}, HostId{"app"}, HostId{"db"}});
    const auto s = compute_metrics(m);
    CHECK(s.shortest_path_length == 3);
    CHECK(s.stddev_path_length == 0.0);
    CHECK(s.number_of_hosts == 3);
  }

  TEST_CASE("report output") {
    const auto r = assess(testutil::chain_model());
    const auto doc = assessment_to_json(r);
    CHECK(doc["model_id"] == "m-test");
    CHECK(doc["config"]["host_prob_gate"] == "MAX");
    CHECK(doc["paths_count"] == 1);
    CHECK(doc["zero_paths_flag"] == false);
    CHECK(assessment_json_text(r) == assessment_json_text(assess(testutil::chain_model())));
    const auto table = assessment_table(r);
    CHECK(table.find("Sum Risk") != std::string::npos);
    CHECK(table.find("Or Probability") != std::string::npos);
    CHECK(table.find("max:sum") != std::string::npos);
    CHECK(format_metric(0.2) == "0.2");
  }

  TEST_CASE("unscored vulnerabilities are listed") {
    auto m = testutil::chain_model();
    m.lower[HostId{"A"}][0].probability.reset();
    m.lower[HostId{"A"}][0].risk.reset();
    const auto r = assess(m);
    REQUIRE(r.unscored.size() == 1);
    CHECK(r.unscored[0].host == HostId{"A"});
  }

  TEST_CASE("build from store") {
    testutil::TempDir dir;
    Store store(dir.path());
    fixtures::install(store, "testbed1");
    const auto m = build_harm_from_store(store, {HostId{"db"}}, "again");
    CHECK(m.lower.at(HostId{"web"}).size() == 7);
    CHECK(m.lower.at(HostId{"app"}).size() == 9);
    CHECK(m.lower.at(HostId{"db"}).size() == 1);
    CHECK(m.label == "again");
    CHECK(store.get_harm(m.model_id).has_value());

    SUBCASE("dangling vulnerability ids are all listed") {
      auto host = *store.get_host("app");
      host.vuln_ids.push_back("ghost1");
      host.vuln_ids.push_back("ghost2");
      store.put_host(host);
      try {
        build_harm_from_store(store, {HostId{"db"}}, "x");
        FAIL("expected a build error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::build);
        CHECK(std::string(e.what()).find("ghost1") != std::string::npos);
        CHECK(std::string(e.what()).find("ghost2") != std::string::npos);
      }
    }
    SUBCASE("nodes-only graph gives zero paths") {
      ReachabilityGraph g;
      g.nodes = {kAttacker, HostId{"web"}, HostId{"app"}, HostId{"db"}};
      store.put_reachability(g);
      CHECK(compute_metrics(build_harm_from_store(store, {HostId{"db"}}, "flat")).zero_paths);
    }
  }
}
