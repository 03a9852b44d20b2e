#include "cloudharm/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "cloudharm/error.hpp"

namespace fs = std::filesystem;

namespace cloudharm {

namespace {

[[noreturn]] void storage_failure(const fs::path& path, std::string_view what, int err = errno) {
  std::string msg = std::string(what) + ": " + path.string();
  if (err != 0) msg += " (" + std::string(std::strerror(err)) + ")";
  throw Error(ErrorKind::storage, msg, path.string());
}

class FileDescriptor {
 public:
  explicit FileDescriptor(int fd) : fd_(fd) {}
  ~FileDescriptor() {
    if (fd_ >= 0) ::close(fd_);
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;

  int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }

 private:
  int fd_;
};

class KeyLock {
 public:
  KeyLock(const fs::path& lock_path, int attempts) : fd_(::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644)) {
    if (fd_.get() < 0) storage_failure(lock_path, "cannot open lock file");
    for (int i = 0; i < attempts; ++i) {
      if (::flock(fd_.get(), LOCK_EX | LOCK_NB) == 0) return;
      if (errno != EWOULDBLOCK && errno != EINTR) storage_failure(lock_path, "flock failed");
      std::this_thread::sleep_for(std::chrono::microseconds(200 + 50 * (i % 16)));
    }
    throw Error(ErrorKind::storage,
                "lock retry exhaustion after " + std::to_string(attempts) + " attempts: " + lock_path.string(),
                lock_path.string());
  }
  ~KeyLock() { ::flock(fd_.get(), LOCK_UN); }

  KeyLock(const KeyLock&) = delete;
  KeyLock& operator=(const KeyLock&) = delete;

 private:
  FileDescriptor fd_;
};

std::string read_file(const fs::path& path, bool& missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    missing = !fs::exists(path);
    if (!missing) storage_failure(path, "cannot open document");
    return {};
  }
  missing = false;
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) storage_failure(path, "read failed");
  return ss.str();
}

void write_all(int fd, const std::string& bytes, const fs::path& path) {
  const char* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      storage_failure(path, "write failed");
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string_view to_string(Collection c) noexcept {
  switch (c) {
    case Collection::ndb: return "ndb";
    case Collection::hdb: return "hdb";
    case Collection::vdb: return "vdb";
    case Collection::harm_objects: return "harm_objects";
  }
  return "ndb";
}

Collection parse_collection(std::string_view name) {
  if (name == "ndb") return Collection::ndb;
  if (name == "hdb") return Collection::hdb;
  if (name == "vdb") return Collection::vdb;
  if (name == "harm_objects") return Collection::harm_objects;
  throw Error(ErrorKind::usage, "unknown collection '" + std::string(name) + "'", std::string(name));
}

void check_key(std::string_view key) {
  const bool ok = !key.empty() && key.size() <= 200 && key.front() != '.' &&
                  std::all_of(key.begin(), key.end(), [](unsigned char c) {
                    return std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == ':' || c == '@';
                  });
  if (!ok) throw Error(ErrorKind::usage, "invalid store key '" + std::string(key) + "'", std::string(key));
}

Store::Store(fs::path base) : base_(std::move(base)) {
  std::error_code ec;
  for (auto c : {Collection::ndb, Collection::hdb, Collection::vdb, Collection::harm_objects}) {
    fs::create_directories(dir(c), ec);
    if (ec) storage_failure(dir(c), "cannot create collection directory", ec.value());
  }
}

fs::path Store::dir(Collection c) const { return base_ / std::string(to_string(c)); }

fs::path Store::document_path(Collection c, std::string_view key) const {
  check_key(key);
  return dir(c) / (std::string(key) + ".json");
}

void Store::write_atomic(const fs::path& target, const std::string& bytes) const {
  static std::atomic<unsigned long> seq{0};
  const fs::path tmp = target.parent_path() /
                       ("." + target.filename().string() + ".tmp." + std::to_string(::getpid()) + "." +
                        std::to_string(seq.fetch_add(1)));
  FileDescriptor fd(::open(tmp.c_str(), O_CREAT | O_EXCL | O_WRONLY | O_CLOEXEC, 0644));
  if (fd.get() < 0) storage_failure(tmp, "cannot create temp file");
  try {
    write_all(fd.get(), bytes, tmp);
    if (::fsync(fd.get()) != 0) storage_failure(tmp, "fsync failed");
  } catch (...) {
    ::unlink(tmp.c_str());
    throw;
  }
  if (::close(fd.release()) != 0) storage_failure(tmp, "close failed");
  if (::rename(tmp.c_str(), target.c_str()) != 0) {
    const int err = errno;
    ::unlink(tmp.c_str());
    storage_failure(target, "rename failed", err);
  }
  FileDescriptor dfd(::open(target.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC));
  if (dfd.get() >= 0) ::fsync(dfd.get());
}

void Store::put(Collection c, std::string_view key, const Json& document) {
  write_atomic(document_path(c, key), canonical_dump(document));
}

std::optional<Json> Store::get(Collection c, std::string_view key) const {
  const auto path = document_path(c, key);
  bool missing = false;
  auto text = read_file(path, missing);
  if (missing) return std::nullopt;
  return parse_json_text(text, path.string());
}

std::vector<std::string> Store::list(Collection c) const {
  std::vector<std::string> keys;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir(c), ec)) {
    const auto name = entry.path().filename().string();
    if (name.empty() || name.front() == '.' || entry.path().extension() != ".json") continue;
    keys.push_back(entry.path().stem().string());
  }
  if (ec) storage_failure(dir(c), "cannot list collection", ec.value());
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool Store::remove(Collection c, std::string_view key) {
  const auto path = document_path(c, key);
  if (::unlink(path.c_str()) == 0) return true;
  if (errno == ENOENT) return false;
  storage_failure(path, "unlink failed");
}

void Store::with_key_lock(Collection c, std::string_view key, const std::function<void()>& body) {
  check_key(key);
  KeyLock lock(dir(c) / ("." + std::string(key) + ".lock"), lock_attempts_);
  body();
}

Json Store::transactional_update(Collection c, std::string_view key,
                                 const std::function<Json(const Json&)>& update) {
  Json result;
  with_key_lock(c, key, [&] {
    const auto current = get(c, key);
    const Json input = current.value_or(Json(nullptr));
    result = update(input);
    if (result == input) return;
    if (result.is_null()) {
      remove(c, key);
      return;
    }
    put(c, key, result);
  });
  return result;
}

void Store::put_harm(const Harm& model) { put(Collection::harm_objects, model.model_id, harm_to_json(model)); }

std::optional<Harm> Store::get_harm(std::string_view model_id) const {
  auto doc = get(Collection::harm_objects, model_id);
  if (!doc) return std::nullopt;
  return harm_from_json(*doc);
}

Harm Store::require_harm(std::string_view model_id) const {
  auto m = get_harm(model_id);
  if (!m) throw Error(ErrorKind::not_found, "no model '" + std::string(model_id) + "'", std::string(model_id));
  return std::move(*m);
}

std::optional<ReachabilityGraph> Store::get_reachability() const {
  auto doc = get(Collection::ndb, kReachabilityKey);
  if (!doc) return std::nullopt;
  return graph_from_json(*doc, "ndb");
}

void Store::put_reachability(const ReachabilityGraph& graph) {
  put(Collection::ndb, kReachabilityKey, graph_to_json(graph));
}

std::optional<HostRecord> Store::get_host(std::string_view host_id) const {
  auto doc = get(Collection::hdb, host_id);
  if (!doc) return std::nullopt;
  return host_record_from_json(*doc, "hdb." + std::string(host_id));
}

void Store::put_host(const HostRecord& host) { put(Collection::hdb, host.host_id.value, host_record_to_json(host)); }

std::optional<VulnerabilityRecord> Store::get_vulnerability(std::string_view vuln_id) const {
  auto doc = get(Collection::vdb, vuln_id);
  if (!doc) return std::nullopt;
  return vulnerability_from_json(*doc, "vdb." + std::string(vuln_id));
}

void Store::put_vulnerability(const VulnerabilityRecord& v) { put(Collection::vdb, v.vuln_id, vulnerability_to_json(v)); }

std::vector<ModelInfo> list_models(const Store& store) {
  std::vector<ModelInfo> out;
  for (const auto& key : store.list(Collection::harm_objects)) {
    auto doc = store.get(Collection::harm_objects, key);
    if (!doc || !doc->is_object()) continue;
    ModelInfo info;
    info.model_id = doc->value("model_id", key);
    info.label = doc->value("label", std::string{});
    info.created_at = doc->value("created_at", std::string{});
    if (auto it = doc->find("parent_id"); it != doc->end() && it->is_string()) info.parent_id = it->get<std::string>();
    out.push_back(std::move(info));
  }
  std::sort(out.begin(), out.end(), [](const ModelInfo& a, const ModelInfo& b) {
    return std::tie(a.created_at, a.model_id) < std::tie(b.created_at, b.model_id);
  });
  return out;
}

std::optional<std::string> latest_model_id(const Store& store) {
  auto models = list_models(store);
  if (models.empty()) return std::nullopt;
  return models.back().model_id;
}

std::vector<std::string> children_of(const Store& store, std::string_view model_id) {
  std::vector<std::string> out;
  for (const auto& m : list_models(store)) {
    if (m.parent_id && *m.parent_id == model_id) out.push_back(m.model_id);
  }
  return out;
}

std::vector<std::string> lineage(const Store& store, std::string_view model_id) {
  std::vector<std::string> chain;
  std::set<std::string> seen;
  std::optional<std::string> cur{std::string(model_id)};
  while (cur) {
    if (!seen.insert(*cur).second) {
      throw Error(ErrorKind::validation, "lineage cycle at '" + *cur + "'", *cur);
    }
    auto doc = store.get(Collection::harm_objects, *cur);
    if (!doc) throw Error(ErrorKind::not_found, "no model '" + *cur + "'", *cur);
    chain.push_back(*cur);
    auto it = doc->find("parent_id");
    cur = (it != doc->end() && it->is_string()) ? std::optional<std::string>(it->get<std::string>()) : std::nullopt;
  }
  return chain;
}

}  // namespace cloudharm
