#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "cloudharm/assess.hpp"
#include "cloudharm/error.hpp"
#include "cloudharm/vuln_ingest.hpp"

namespace cloudharm {

class Store;

struct ServiceOptions {
  /// Value for Access-Control-Allow-Origin; empty disables CORS headers.
  std::string cors_origin;
  /// Used by POST /ingest/scan when the request carries no snapshot.
  std::optional<NvdSnapshot> nvd;
  /// Default and maximum number of paths returned by /models/{id}/paths.
  std::size_t path_limit = 1000;
  std::size_t path_cap = kDefaultPathCap;
};

/// HTTP/JSON API over a store (see docs/api.md and schemas/openapi.json).
/// Handlers are stateless; every write goes through the store.
class HttpService {
 public:
  HttpService(Store& store, ServiceOptions options = {});
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  /// Throws Error{storage} when the socket cannot be bound.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Must follow bind().
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error kind: 404 not_found, 409 conflict, 500 storage,
/// 400 otherwise.
int http_status(ErrorKind kind) noexcept;

/// {"error": {"kind", "message", "subject"[, "step"]}}
Json error_to_json(const Error& error);

}  // namespace cloudharm
