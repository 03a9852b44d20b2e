#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cloudharm/model.hpp"

namespace cloudharm {

/// The four databases: network (reachability graph), hosts, vulnerabilities,
/// and versioned HARM objects.
enum class Collection { ndb, hdb, vdb, harm_objects };

std::string_view to_string(Collection c) noexcept;

/// Throws Error{usage} for names other than ndb, hdb, vdb, harm_objects.
Collection parse_collection(std::string_view name);

/// Throws Error{usage} unless the key is a plain file-name-safe id.
void check_key(std::string_view key);

/// Well-known keys.
inline constexpr std::string_view kReachabilityKey = "reachability";

/// File-backed document store. Layout: <base>/<collection>/<key>.json holding
/// canonical JSON. Writes go to a temp file in the same directory and are
/// renamed into place, so readers only ever see complete documents.
///
/// transactional_update serializes writers per key with an advisory file lock
/// (flock on <collection>/.<key>.lock); it excludes both threads and other
/// processes. Plain put/get/list/remove take no locks.
class Store {
 public:
  explicit Store(std::filesystem::path base);

  const std::filesystem::path& base() const noexcept { return base_; }
  std::filesystem::path document_path(Collection c, std::string_view key) const;

  void put(Collection c, std::string_view key, const Json& document);
  std::optional<Json> get(Collection c, std::string_view key) const;
  std::vector<std::string> list(Collection c) const;
  bool remove(Collection c, std::string_view key);

  /// Runs `update` on the current document (null when absent) under the
  /// per-key lock. The result is written only if it differs from the input;
  /// a null result on an absent key writes nothing. Returns the new document.
  Json transactional_update(Collection c, std::string_view key,
                            const std::function<Json(const Json&)>& update);

  /// Holds the per-key lock while `body` runs. Used for multi-document
  /// critical sections keyed on one document (lineage commits).
  void with_key_lock(Collection c, std::string_view key, const std::function<void()>& body);

  /// Lock acquisition attempts before transactional_update gives up.
  void set_lock_attempts(int attempts) noexcept { lock_attempts_ = attempts; }

  // Typed helpers over the raw collections.
  void put_harm(const Harm& model);
  std::optional<Harm> get_harm(std::string_view model_id) const;
  Harm require_harm(std::string_view model_id) const;

  std::optional<ReachabilityGraph> get_reachability() const;
  void put_reachability(const ReachabilityGraph& graph);

  std::optional<HostRecord> get_host(std::string_view host_id) const;
  void put_host(const HostRecord& host);

  std::optional<VulnerabilityRecord> get_vulnerability(std::string_view vuln_id) const;
  void put_vulnerability(const VulnerabilityRecord& v);

 private:
  std::filesystem::path dir(Collection c) const;
  void write_atomic(const std::filesystem::path& target, const std::string& bytes) const;

  std::filesystem::path base_;
  int lock_attempts_ = 5000;
};

/// Summary row for model listings.
struct ModelInfo {
  std::string model_id;
  std::string label;
  std::optional<std::string> parent_id;
  std::string created_at;
};

/// All stored models ordered by (created_at, model_id).
std::vector<ModelInfo> list_models(const Store& store);

/// Most recently created model, if any.
std::optional<std::string> latest_model_id(const Store& store);

/// Ids of stored models whose parent is `model_id`.
std::vector<std::string> children_of(const Store& store, std::string_view model_id);

/// Follows parent_id links from `model_id` to the root; first element is
/// `model_id` itself. Throws Error{not_found} if a link is missing and
/// Error{validation} on a cycle.
std::vector<std::string> lineage(const Store& store, std::string_view model_id);

}  // namespace cloudharm
