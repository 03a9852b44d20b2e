#include "cloudharm/service.hpp"

#include <charconv>

#include "cloudharm/error.hpp"
#include "cloudharm/psv.hpp"
#include "cloudharm/sg_ingest.hpp"
#include "cloudharm/store.hpp"
#include "cloudharm/whatif.hpp"
#include "httplib.h"

namespace cloudharm {

int http_status(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::storage: return 500;
    default: return 400;
  }
}

Json error_to_json(const Error& error) {
  Json body = {{"kind", to_string(error.kind())}, {"message", error.what()}, {"subject", error.subject()}};
  if (const auto* m = dynamic_cast<const ModificationError*>(&error)) body["step"] = m->step();
  return {{"error", std::move(body)}};
}

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, const Json& doc, int status = 200) {
  res.status = status;
  res.set_content(canonical_dump(doc), kJson);
}

std::optional<std::string> query(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  const auto text = query(req, name);
  if (!text) return fallback;
  long long value = 0;
  const auto* end = text->data() + text->size();
  auto [ptr, ec] = std::from_chars(text->data(), end, value);
  if (ec != std::errc{} || ptr != end || value < 0) {
    throw Error(ErrorKind::usage, std::string("query parameter '") + name + "' must be a non-negative integer", name);
  }
  return static_cast<std::size_t>(value);
}

AggregationConfig gates_param(const httplib::Request& req) {
  const auto text = query(req, "gates");
  return text ? parse_gates(*text) : AggregationConfig{};
}

Json body_json(const httplib::Request& req) { return parse_json_text(req.body, "request body"); }

}  // namespace

struct HttpService::Impl {
  Impl(Store& s, ServiceOptions o) : store(s), options(std::move(o)) {}

  Store& store;
  ServiceOptions options;
  httplib::Server server;

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  // Wraps a handler so that Errors become JSON bodies with mapped statuses.
  Handler guarded(Handler inner) {
    return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
      try {
        inner(req, res);
      } catch (const Error& e) {
        send_json(res, error_to_json(e), http_status(e.kind()));
      } catch (const Json::exception& e) {
        send_json(res, error_to_json(Error(ErrorKind::parse, e.what())), 400);
      } catch (const std::exception& e) {
        send_json(res, error_to_json(Error(ErrorKind::storage, e.what())), 500);
      }
    };
  }

  void routes() {
    if (!options.cors_origin.empty()) {
      server.set_post_routing_handler([origin = options.cors_origin](const auto&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
      });
      server.Options(R"(/.*)", [](const auto&, httplib::Response& res) { res.status = 204; });
    }

    server.Get("/healthz", guarded([](const auto&, auto& res) { send_json(res, {{"status", "ok"}}); }));

    server.Get("/models", guarded([this](const auto&, auto& res) {
      Json out = Json::array();
      for (const auto& m : list_models(store)) {
        out.push_back({{"model_id", m.model_id},
                       {"label", m.label},
                       {"parent_id", m.parent_id ? Json(*m.parent_id) : Json(nullptr)},
                       {"created_at", m.created_at}});
      }
      send_json(res, out);
    }));

    server.Get(R"(/models/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
      res.set_content(serialize_harm(store.require_harm(req.matches[1].str())), kJson);
    }));

    server.Get(R"(/models/([^/]+)/metrics)", guarded([this](const httplib::Request& req, auto& res) {
      const auto config = gates_param(req);
      const auto model = store.require_harm(req.matches[1].str());
      res.set_content(assessment_json_text(assess(model, config, options.path_cap)), kJson);
    }));

    server.Get(R"(/models/([^/]+)/paths)", guarded([this](const httplib::Request& req, auto& res) {
      const auto limit = std::min(size_param(req, "limit", options.path_limit), options.path_limit);
      const auto model = store.require_harm(req.matches[1].str());
      const auto paths = enumerate_attack_paths(model, options.path_cap);
      Json list = Json::array();
      for (std::size_t i = 0; i < paths.size() && i < limit; ++i) list.push_back(path_to_json(paths[i]));
      send_json(res, {{"model_id", model.model_id},
                      {"total", paths.size()},
                      {"returned", list.size()},
                      {"truncated", list.size() < paths.size()},
                      {"paths", std::move(list)}});
    }));

    server.Get(R"(/models/([^/]+)/psv)", guarded([this](const httplib::Request& req, auto& res) {
      const auto config = gates_param(req);
      const auto objective = parse_objective(query(req, "objective").value_or("sum_risk"));
      const auto model = store.require_harm(req.matches[1].str());
      const auto k = size_param(req, "k", std::min<std::size_t>(5, model.vulnerability_count()));
      const auto ranking = rank_psv_es(model, static_cast<int>(k), config, objective, options.path_cap);
      send_json(res, psv_to_json(ranking, model.model_id));
    }));

    // Read-only: intermediate models are not persisted here.
    server.Get(R"(/models/([^/]+)/trajectory)", guarded([this](const httplib::Request& req, auto& res) {
      const auto config = gates_param(req);
      const auto objective = parse_objective(query(req, "objective").value_or("sum_risk"));
      const auto model = store.require_harm(req.matches[1].str());
      const auto k = size_param(req, "k", std::min<std::size_t>(5, model.vulnerability_count()));
      std::vector<MetricSuite> trajectory{compute_metrics(model, config, options.path_cap)};
      if (k > 0) trajectory = patch_trajectory(model, rank_psv_es(model, static_cast<int>(k), config, objective), config);
      if (query(req, "format").value_or("json") == "csv") {
        res.set_content(trajectory_csv(trajectory), "text/csv");
      } else {
        send_json(res, trajectory_to_json(trajectory));
      }
    }));

    server.Post(R"(/models/([^/]+)/whatif/preview)", guarded([this](const httplib::Request& req, auto& res) {
      const auto mods = modifications_from_json(body_json(req));
      WhatIfSession session(store, req.matches[1].str(), gates_param(req));
      send_json(res, comparison_to_json(session.propose(mods)));
    }));

    server.Post(R"(/models/([^/]+)/whatif/commit)", guarded([this](const httplib::Request& req, auto& res) {
      const auto body = body_json(req);
      if (!body.is_object()) throw Error(ErrorKind::parse, "commit body must be an object {mods, label}", "body");
      const auto mods = modifications_from_json(body.value("mods", Json::array()));
      const auto label = body.value("label", std::string("modified"));
      std::optional<std::size_t> expected;
      if (auto it = body.find("expected_children"); it != body.end() && !it->is_null()) {
        if (!it->is_number_unsigned()) {
          throw Error(ErrorKind::parse, "expected_children must be a non-negative integer", "expected_children");
        }
        expected = it->get<std::size_t>();
      }
      auto result = commit_variant(store, req.matches[1].str(), mods, label, gates_param(req), expected);
      send_json(res, {{"variant_id", result.variant_id}, {"report", comparison_to_json(result.report)}}, 201);
    }));

    server.Post("/models", guarded([this](const httplib::Request& req, auto& res) {
      const auto body = body_json(req);
      if (!body.is_object() || !body.contains("targets") || !body["targets"].is_array()) {
        throw Error(ErrorKind::parse, "body must be {targets: [...], label}", "targets");
      }
      std::set<HostId> targets;
      for (const auto& t : body["targets"]) {
        if (!t.is_string()) throw Error(ErrorKind::parse, "targets must be strings", "targets");
        targets.insert(HostId{t.get<std::string>()});
      }
      const auto model = build_harm_from_store(store, targets, body.value("label", std::string("initial")));
      send_json(res, {{"model_id", model.model_id}}, 201);
    }));

    server.Post("/ingest/sg", guarded([this](const httplib::Request& req, auto& res) {
      const auto doc = parse_sg_export(req.body);
      ReachabilityOptions ro;
      ro.include_admin_rules = query(req, "include_admin_rules").value_or("false") == "true";
      auto built = build_reachability_graph(doc, ro);
      store.put_reachability(built.graph);
      send_json(res, {{"nodes", built.graph.host_count()},
                      {"edges", built.graph.edges.size()},
                      {"warnings", built.warnings}});
    }));

    server.Post("/ingest/scan", guarded([this](const httplib::Request& req, auto& res) {
      const auto body = body_json(req);
      const bool wrapped = body.is_object() && body.contains("report");
      const auto report = parse_scan_report((wrapped ? body["report"] : body).dump());
      NvdSnapshot nvd = options.nvd.value_or(NvdSnapshot{});
      if (wrapped && body.contains("nvd") && !body["nvd"].is_null()) nvd = parse_nvd_snapshot(body["nvd"].dump());
      const auto summary = ingest_scan(report, nvd, store);
      send_json(res, {{"hosts_updated", summary.hosts_updated},
                      {"vulns_added", summary.vulns_added},
                      {"vulns_reused", summary.vulns_reused},
                      {"warnings", summary.warnings}});
    }));
  }
};

HttpService::HttpService(Store& store, ServiceOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  impl_->routes();
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorKind::storage, "cannot bind " + host, host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorKind::storage, "cannot bind " + host + ":" + std::to_string(port), host);
  }
  return port;
}

void HttpService::run() { impl_->server.listen_after_bind(); }

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace cloudharm
