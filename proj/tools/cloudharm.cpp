#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cloudharm/assess.hpp"
#include "cloudharm/error.hpp"
#include "cloudharm/fixtures.hpp"
#include "cloudharm/psv.hpp"
#include "cloudharm/service.hpp"
#include "cloudharm/sg_ingest.hpp"
#include "cloudharm/store.hpp"
#include "cloudharm/vuln_ingest.hpp"
#include "cloudharm/whatif.hpp"

using namespace cloudharm;

namespace {

struct Globals {
  std::string store;
  bool json = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::storage, "cannot read '" + path + "'", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Store open_store(const Globals& g) {
  if (g.store.empty()) throw Error(ErrorKind::usage, "no store given; pass --store or set CLOUDHARM_STORE", "store");
  return Store(g.store);
}

std::string resolve_model(const Store& store, const std::string& given) {
  if (!given.empty()) return given;
  if (auto latest = latest_model_id(store)) return *latest;
  throw Error(ErrorKind::not_found, "no model in store", "model");
}

class Stages {
 public:
  void mark(std::string name) {
    const auto now = std::chrono::steady_clock::now();
    rows_.emplace_back(std::move(name), std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }
  void add(std::string name, double seconds) { rows_.emplace_back(std::move(name), seconds); }

  Json to_json() const {
    Json out = Json::array();
    for (const auto& [name, s] : rows_) out.push_back({{"stage", name}, {"seconds", s}});
    return out;
  }
  void print(std::ostream& os) const {
    for (const auto& [name, s] : rows_) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", s);
      os << name << ": " << buf << " s\n";
    }
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> rows_;
};

void emit(const Globals& g, const Json& doc, const std::string& text) {
  if (g.json) {
    std::cout << canonical_dump(doc);
  } else {
    std::cout << text;
  }
}

std::string join(const std::vector<std::string>& items, const char* sep = ", ") {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : sep) + i;
  return out;
}

HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloud security assessment with two-layer attack models"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--store", g.store, "Store directory")->envname("CLOUDHARM_STORE");
  app.add_flag("--json", g.json, "Machine-readable output; errors as JSON on stderr");

  std::function<void()> action;

  // ingest-sg
  auto* sg = app.add_subcommand("ingest-sg", "Parse an SG export, build the reachability graph, store it in NDB");
  std::string sg_file;
  bool include_admin = false;
  std::vector<std::string> admin_cidrs;
  sg->add_option("export", sg_file, "SG export JSON")->required();
  sg->add_flag("--include-admin-rules", include_admin, "Keep rules whose source is an allowlisted /32");
  sg->add_option("--admin", admin_cidrs, "Extra management /32 sources");
  sg->callback([&] {
    action = [&] {
      auto store = open_store(g);
      Stages stages;
      ReachabilityOptions ro;
      ro.include_admin_rules = include_admin;
      for (const auto& c : admin_cidrs) {
        auto cidr = parse_cidr(c);
        if (!cidr) throw Error(ErrorKind::usage, "malformed CIDR '" + c + "'", c);
        ro.admin_allowlist.push_back(*cidr);
      }
      const auto text = read_file(sg_file);
      auto built = build_reachability_graph(parse_sg_export(text), ro);
      stages.mark("Parsing and build Reachability Graph");
      store.put_reachability(built.graph);
      stages.mark("Insert and Update Database");
      for (const auto& w : built.warnings) std::cerr << "warning: " << w << "\n";
      std::ostringstream os;
      os << "reachability graph: " << built.graph.host_count() << " hosts, " << built.graph.edges.size()
         << " edges\n";
      stages.print(os);
      emit(g,
           {{"hosts", built.graph.host_count()},
            {"edges", built.graph.edges.size()},
            {"warnings", built.warnings},
            {"timings", stages.to_json()}},
           os.str());
    };
  });

  // ingest-scan
  auto* scan = app.add_subcommand("ingest-scan", "Ingest one scan report into HDB and VDB");
  std::string scan_file, nvd_file, scoring = "exploitability";
  bool descriptor = false;
  scan->add_option("report", scan_file, "Scan report JSON")->required();
  scan->add_option("--nvd", nvd_file, "NVD snapshot JSON");
  scan->add_flag("--descriptor", descriptor, "Input is a host fixture descriptor rather than a scan report");
  scan->add_option("--scoring", scoring, "Fallback scoring map")->check(CLI::IsMember({"exploitability", "base"}));
  scan->callback([&] {
    action = [&] {
      auto store = open_store(g);
      Stages stages;
      const auto text = read_file(scan_file);
      const auto report = descriptor ? fixture_scan(parse_json_text(text, scan_file)) : parse_scan_report(text);
      stages.mark("Scan report parsing");
      const auto nvd = nvd_file.empty() ? NvdSnapshot{} : parse_nvd_snapshot(read_file(nvd_file));
      const auto cfg = scoring == "base" ? ScoringConfig::base_score() : ScoringConfig::exploitability_default();
      const auto s = ingest_scan(report, nvd, store, cfg);
      stages.mark("Insert Vulnerability Database(Including NVD parsing)");
      for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
      std::ostringstream os;
      os << "host " << report.host_id.value << ": " << report.findings.size() << " findings, " << s.vulns_added
         << " added, " << s.vulns_reused << " reused\n";
      stages.print(os);
      emit(g,
           {{"host_id", report.host_id.value},
            {"hosts_updated", s.hosts_updated},
            {"vulns_added", s.vulns_added},
            {"vulns_reused", s.vulns_reused},
            {"warnings", s.warnings},
            {"timings", stages.to_json()}},
           os.str());
    };
  });

  // ingest-vdb
  auto* vdb = app.add_subcommand("ingest-vdb", "Load authoritative VDB rows (records with probability/risk)");
  std::string vdb_file, vdb_nvd;
  vdb->add_option("records", vdb_file, "VDB rows JSON")->required();
  vdb->add_option("--nvd", vdb_nvd, "Snapshot used to fill missing impact/cvss");
  vdb->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto nvd = vdb_nvd.empty() ? NvdSnapshot{} : parse_nvd_snapshot(read_file(vdb_nvd));
      const auto rows = parse_vdb_fixture(read_file(vdb_file), &nvd);
      int added = 0;
      for (const auto& rec : rows) {
        store.transactional_update(Collection::vdb, rec.vuln_id, [&](const Json& current) {
          if (!current.is_null()) return current;
          ++added;
          return vulnerability_to_json(rec);
        });
      }
      const int reused = static_cast<int>(rows.size()) - added;
      emit(g, {{"vulns_added", added}, {"vulns_reused", reused}},
           std::to_string(added) + " added, " + std::to_string(reused) + " already present\n");
    };
  });

  // build-harm
  auto* build = app.add_subcommand("build-harm", "Assemble a model from NDB/HDB/VDB and store it");
  std::vector<std::string> targets;
  std::string label = "initial";
  build->add_option("--targets", targets, "Target host ids")->required()->delimiter(',');
  build->add_option("--label", label, "Model label");
  build->callback([&] {
    action = [&] {
      auto store = open_store(g);
      std::set<HostId> t;
      for (const auto& id : targets) t.insert(HostId{id});
      const auto start = std::chrono::steady_clock::now();
      const auto model = build_harm_from_store(store, t, label);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      emit(g,
           {{"model_id", model.model_id}, {"hosts", model.upper.host_count()},
            {"vulnerabilities", model.vulnerability_count()}, {"seconds", secs}},
           model.model_id + "\n");
    };
  });

  // assess
  auto* as = app.add_subcommand("assess", "Compute the metric suite for a stored model");
  std::string model_id, gates = "max:sum";
  std::size_t cap = kDefaultPathCap;
  as->add_option("model-id", model_id, "Model id (default: latest)");
  as->add_option("--gates", gates, "Host gates <prob>:<risk>, e.g. or:sum");
  as->add_option("--path-cap", cap, "Maximum attack paths to enumerate");
  as->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto config = parse_gates(gates);
      const auto report = assess(store.require_harm(resolve_model(store, model_id)), config, cap);
      std::cout << (g.json ? assessment_json_text(report) : assessment_table(report));
    };
  });

  // psv
  auto* psv = app.add_subcommand("psv", "Rank vulnerabilities by patching benefit (greedy exhaustive search)");
  int k = 5;
  std::string objective = "sum_risk";
  bool subset = false;
  psv->add_option("model-id", model_id, "Model id (default: latest)");
  psv->add_option("-k", k, "Ranking length");
  psv->add_option("--objective", objective, "sum_risk, max_risk, or_probability, max_probability, exposed_risk");
  psv->add_option("--gates", gates, "Host gates <prob>:<risk>");
  psv->add_flag("--subset", subset, "Also report the best k-subset (at most 15 instances)");
  psv->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto config = parse_gates(gates);
      const auto obj = parse_objective(objective);
      const auto model = store.require_harm(resolve_model(store, model_id));
      const auto ranking = rank_psv_es(model, k, config, obj);
      Json doc = psv_to_json(ranking, model.model_id);
      std::ostringstream os;
      os << "PSV (" << objective << ", gates " << to_string(config) << ") for " << model.model_id << "\n";
      os << "Rank  Host        Vulnerability  Reduction\n";
      for (const auto& e : ranking.ranked) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-5d %-11s %-14s %s\n", e.rank, e.target.host_id.value.c_str(),
                      e.target.vuln_id.c_str(), format_metric(e.objective_reduction).c_str());
        os << buf;
      }
      if (subset) {
        const auto best = best_subset_es(model, static_cast<std::size_t>(k), config, obj);
        Json removed = Json::array();
        std::vector<std::string> names;
        for (const auto& r : best.removed) {
          removed.push_back({{"host_id", r.host_id.value}, {"vuln_id", r.vuln_id}});
          names.push_back(r.host_id.value + "/" + r.vuln_id);
        }
        doc["best_subset"] = {{"removed", removed}, {"reduction", best.reduction}};
        os << "Best " << k << "-subset: " << join(names) << " (reduction " << format_metric(best.reduction) << ")\n";
      }
      emit(g, doc, os.str());
    };
  });

  // trajectory
  auto* traj = app.add_subcommand("trajectory", "Metrics after patching the top-k PSV vulnerabilities in order");
  std::string format = "csv";
  bool no_persist = false;
  traj->add_option("model-id", model_id, "Model id (default: latest)");
  traj->add_option("-k", k, "Number of patch steps");
  traj->add_option("--objective", objective, "PSV objective");
  traj->add_option("--gates", gates, "Host gates <prob>:<risk>");
  traj->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  traj->add_flag("--no-persist", no_persist, "Do not store the intermediate models");
  traj->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto config = parse_gates(gates);
      const auto model = store.require_harm(resolve_model(store, model_id));
      std::vector<MetricSuite> t{compute_metrics(model, config)};
      if (k > 0) {
        const auto ranking = rank_psv_es(model, k, config, parse_objective(objective));
        t = patch_trajectory(model, ranking, config, no_persist ? nullptr : &store);
      }
      if (g.json || format == "json") {
        std::cout << canonical_dump(trajectory_to_json(t));
      } else {
        std::cout << trajectory_csv(t);
      }
    };
  });

  // whatif
  auto* wi = app.add_subcommand("whatif", "Apply a modification script to a stored model and compare");
  std::string mods_file;
  bool commit = false;
  std::string wi_label = "modified";
  std::optional<std::size_t> expected_children;
  wi->add_option("base-id", model_id, "Base model id (default: latest)");
  wi->add_option("--mods", mods_file, "Modification script JSON")->required();
  wi->add_flag("--commit", commit, "Persist the variant");
  wi->add_option("--label", wi_label, "Variant label");
  wi->add_option("--expected-children", expected_children, "Fail with a conflict unless the base has this many children");
  wi->add_option("--gates", gates, "Host gates <prob>:<risk>");
  wi->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto config = parse_gates(gates);
      const auto mods = parse_modifications(read_file(mods_file));
      const auto base = resolve_model(store, model_id);
      if (commit) {
        auto r = commit_variant(store, base, mods, wi_label, config, expected_children);
        emit(g, {{"variant_id", r.variant_id}, {"report", comparison_to_json(r.report)}},
             comparison_table(r.report));
      } else {
        WhatIfSession session(store, base, config);
        const auto report = session.propose(mods);
        emit(g, comparison_to_json(report), comparison_table(report));
      }
    };
  });

  // models / lineage
  auto* models = app.add_subcommand("models", "List stored models");
  models->callback([&] {
    action = [&] {
      auto store = open_store(g);
      Json doc = Json::array();
      std::ostringstream os;
      for (const auto& m : list_models(store)) {
        doc.push_back({{"model_id", m.model_id},
                       {"label", m.label},
                       {"parent_id", m.parent_id ? Json(*m.parent_id) : Json(nullptr)},
                       {"created_at", m.created_at}});
        os << m.model_id << "  " << m.created_at << "  " << m.label
           << (m.parent_id ? "  (parent " + *m.parent_id + ")" : "") << "\n";
      }
      emit(g, doc, os.str());
    };
  });
  auto* lin = app.add_subcommand("lineage", "Parent chain of a model");
  lin->add_option("model-id", model_id, "Model id (default: latest)");
  lin->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto chain = lineage(store, resolve_model(store, model_id));
      emit(g, chain, join(chain, "\n") + "\n");
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string listen = "127.0.0.1:8080", cors, serve_nvd;
  serve->add_option("--listen", listen, "host:port (port 0 picks a free port)");
  serve->add_option("--cors-origin", cors, "Allowed browser origin");
  serve->add_option("--nvd", serve_nvd, "Default NVD snapshot for /ingest/scan");
  serve->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorKind::usage, "--listen expects host:port", listen);
      int port = 0;
      try {
        port = std::stoi(listen.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorKind::usage, "--listen expects host:port", listen);
      }
      ServiceOptions opts;
      opts.cors_origin = cors;
      if (!serve_nvd.empty()) opts.nvd = parse_nvd_snapshot(read_file(serve_nvd));
      HttpService service(store, opts);
      const int bound = service.bind(listen.substr(0, colon), port);
      std::cout << "listening on " << listen.substr(0, colon) << ":" << bound << std::endl;
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.run();
      g_service = nullptr;
    };
  });

  // fixtures
  auto* fx = app.add_subcommand("fixtures", "Bundled testbed fixtures");
  fx->require_subcommand(1);
  auto* fx_install = fx->add_subcommand("install", "Run the Phase-1 pipeline for a testbed into the store");
  std::string testbed;
  fx_install->add_option("testbed", testbed, "testbed1, testbed1-modified or testbed2")->required();
  fx_install->callback([&] {
    action = [&] {
      auto store = open_store(g);
      const auto r = fixtures::install(store, testbed);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      Stages stages;
      for (const auto& t : r.timings) stages.add(t.stage, t.seconds);
      std::ostringstream os;
      os << r.model_id << "\n";
      stages.print(os);
      emit(g,
           {{"model_id", r.model_id},
            {"hosts_updated", r.ingest.hosts_updated},
            {"vulns_added", r.ingest.vulns_added},
            {"vulns_reused", r.ingest.vulns_reused},
            {"warnings", r.warnings},
            {"timings", stages.to_json()}},
           os.str());
    };
  });
  auto* fx_list = fx->add_subcommand("list", "List testbeds and embedded fixture files");
  fx_list->callback([&] {
    action = [&] {
      emit(g, {{"testbeds", fixtures::testbeds()}, {"files", fixtures::files()}},
           join(fixtures::testbeds(), "\n") + "\n");
    };
  });
  auto* fx_show = fx->add_subcommand("show", "Print an embedded fixture file");
  std::string fx_path;
  fx_show->add_option("path", fx_path, "Path relative to fixtures/, e.g. sg/testbed1.json")->required();
  fx_show->callback([&] { action = [&] { std::cout << fixtures::require_file(fx_path); }; });

  auto report_error = [&](ErrorKind kind, const std::string& message, const std::string& subject,
                          std::optional<std::size_t> step) {
    if (g.json) {
      Json body = {{"kind", to_string(kind)}, {"message", message}, {"subject", subject}};
      if (step) body["step"] = *step;
      std::cerr << canonical_dump({{"error", body}});
    } else {
      std::cerr << "error: " << message << "\n";
    }
    return exit_code(kind);
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(ErrorKind::usage, e.what(), "", std::nullopt);
  }

  try {
    if (action) action();
    return 0;
  } catch (const ModificationError& e) {
    return report_error(e.kind(), e.what(), e.subject(), e.step());
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), e.subject(), std::nullopt);
  } catch (const std::exception& e) {
    return report_error(ErrorKind::storage, e.what(), "", std::nullopt);
  }
}
