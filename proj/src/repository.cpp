#include "cb/repository.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "cb/archive.hpp"
#include "cb/digest.hpp"
#include "cb/error.hpp"
#include "cb/units.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace cb {

const char* to_string(Visibility v) noexcept { return v == Visibility::public_ ? "public" : "private"; }

Visibility parse_visibility(std::string_view text) {
  if (text == "public") return Visibility::public_;
  if (text == "private") return Visibility::private_;
  throw Error(ErrorKind::repository, "repository.invalid", "visibility must be public or private");
}

const char* to_string(RunState s) noexcept {
  switch (s) {
    case RunState::created: return "created";
    case RunState::extracted: return "extracted";
    case RunState::running: return "running";
    case RunState::finished: return "finished";
    case RunState::failed: return "failed";
  }
  return "?";
}

std::uint64_t Artifact::total_bytes() const {
  std::uint64_t sum = 0;
  for (const auto& v : versions) sum += v.size_bytes;
  return sum;
}

const ArtifactVersion* Artifact::version(int version_id) const {
  for (const auto& v : versions) {
    if (v.version_id == version_id) return &v;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

ojson meta_json(const ArtifactMeta& m) {
  ojson j;
  j["title"] = m.title;
  j["authors"] = m.authors;
  j["description"] = m.description;
  j["tags"] = m.tags;
  j["visibility"] = to_string(m.visibility);
  j["links"] = m.links;
  return j;
}

ArtifactMeta meta_from(const nlohmann::json& j) {
  ArtifactMeta m;
  m.title = j.value("title", "");
  m.authors = j.value("authors", std::vector<std::string>{});
  m.description = j.value("description", "");
  m.tags = j.value("tags", std::vector<std::string>{});
  m.visibility = parse_visibility(j.value("visibility", "public"));
  m.links = j.value("links", std::vector<std::string>{});
  return m;
}

ojson version_json(const ArtifactVersion& v) {
  return ojson{{"version_id", v.version_id},
               {"created_at", v.created_at},
               {"content_hash", v.content_hash},
               {"size_bytes", v.size_bytes}};
}

ArtifactVersion version_from(const nlohmann::json& j) {
  ArtifactVersion v;
  v.version_id = j.at("version_id").get<int>();
  v.created_at = j.at("created_at").get<std::string>();
  v.content_hash = j.at("content_hash").get<std::string>();
  v.size_bytes = j.at("size_bytes").get<std::uint64_t>();
  return v;
}

ojson artifact_json(const Artifact& a) {
  ojson j;
  j["artifact_id"] = a.artifact_id;
  const auto meta = meta_json(a.meta);
  for (const auto& [k, v] : meta.items()) j[k] = v;
  j["created_at"] = a.created_at;
  j["versions"] = ojson::array();
  for (const auto& v : a.versions) j["versions"].push_back(version_json(v));
  return j;
}

}  // namespace

std::string artifact_to_json(const Artifact& a) { return artifact_json(a).dump(2) + "\n"; }

std::string artifact_summary_json(const std::vector<Artifact>& artifacts) {
  auto arr = ojson::array();
  for (const auto& a : artifacts) {
    ojson j;
    j["artifact_id"] = a.artifact_id;
    j["title"] = a.meta.title;
    j["authors"] = a.meta.authors;
    j["description"] = a.meta.description;
    j["tags"] = a.meta.tags;
    j["visibility"] = to_string(a.meta.visibility);
    j["latest_version"] = a.versions.empty() ? ojson(nullptr) : ojson(a.versions.back().version_id);
    j["created_at"] = a.created_at;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string version_to_json(const ArtifactVersion& v) { return version_json(v).dump(2) + "\n"; }

std::string run_handle_to_json(const RunHandle& h) {
  ojson j;
  j["handle_id"] = h.handle_id;
  j["artifact_id"] = h.artifact_id;
  j["version_id"] = h.version_id;
  j["workspace_path"] = h.workspace_path.string();
  j["state"] = to_string(h.state);
  j["completed"] = h.completed;
  j["total"] = h.total;
  j["error"] = h.error;
  j["run_id"] = h.run_id;
  j["updated_at"] = h.updated_at;
  return j.dump(2) + "\n";
}

ArtifactMeta meta_from_json(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    if (!j.is_object()) throw Error(ErrorKind::repository, "repository.invalid", "metadata must be a JSON object");
    return meta_from(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::repository, "repository.invalid", std::string("bad metadata: ") + e.what());
  }
}

ArtifactVersion version_from_json(std::string_view json) {
  try {
    return version_from(nlohmann::json::parse(json));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::repository, "repository.invalid", std::string("bad version record: ") + e.what());
  }
}

RunHandle run_handle_from_json(std::string_view json) {
  static const std::map<std::string, RunState> states = {{"created", RunState::created},
                                                         {"extracted", RunState::extracted},
                                                         {"running", RunState::running},
                                                         {"finished", RunState::finished},
                                                         {"failed", RunState::failed}};
  try {
    const auto j = nlohmann::json::parse(json);
    RunHandle h;
    h.handle_id = j.at("handle_id").get<std::string>();
    h.artifact_id = j.value("artifact_id", "");
    h.version_id = j.value("version_id", 0);
    h.workspace_path = j.value("workspace_path", "");
    const auto st = states.find(j.at("state").get<std::string>());
    if (st == states.end()) throw Error(ErrorKind::repository, "repository.invalid", "unknown run state");
    h.state = st->second;
    h.completed = j.value("completed", 0);
    h.total = j.value("total", 0);
    h.error = j.value("error", "");
    h.run_id = j.value("run_id", "");
    h.updated_at = j.value("updated_at", "");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::repository, "repository.invalid", std::string("bad run handle: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Repository
// ---------------------------------------------------------------------------

struct ArtifactRepository::Index {
  std::map<std::string, Artifact> artifacts;
  std::uint64_t next_sequence = 1;
};

namespace {

constexpr const char* kJournal = "journal.jsonl";

std::string new_uuid() {
  static std::mutex m;
  static std::mt19937_64 gen{[] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }()};
  std::lock_guard lock(m);
  std::uint64_t hi = gen();
  std::uint64_t lo = gen();
  hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;  // version 4
  lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;  // RFC 4122 variant
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xffff), static_cast<unsigned>(hi & 0xffff),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

[[noreturn]] void not_found(const std::string& what) {
  throw Error(ErrorKind::repository, "repository.not_found", what + " not found");
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool matches_query(const Artifact& a, const std::string& q) {
  if (q.empty()) return true;
  auto has = [&](const std::string& field) { return lower(field).find(q) != std::string::npos; };
  if (has(a.meta.title) || has(a.meta.description)) return true;
  for (const auto& t : a.meta.tags) {
    if (has(t)) return true;
  }
  for (const auto& au : a.meta.authors) {
    if (has(au)) return true;
  }
  return false;
}

void write_durably(const fs::path& path, std::string_view data) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorKind::repository, "repository.io", "cannot create " + path.string());
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n <= 0) {
      ::close(fd);
      throw Error(ErrorKind::repository, "repository.io", "short write to " + path.string());
    }
    off += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ArtifactRepository::ArtifactRepository(fs::path root, RepositoryOptions options)
    : root_(std::move(root)), options_(options) {
  fs::create_directories(root_ / "blobs");
  fs::create_directories(root_ / "workspaces");
  replay();
}

ArtifactRepository::~ArtifactRepository() = default;

std::shared_ptr<const ArtifactRepository::Index> ArtifactRepository::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return index_;
}

void ArtifactRepository::replay() {
  auto index = std::make_shared<Index>();
  const auto path = root_ / kJournal;
  if (fs::exists(path)) {
    const auto text = slurp(path);
    std::size_t pos = 0;
    std::size_t valid_end = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      const bool last = nl == std::string::npos;
      const auto line = text.substr(pos, last ? std::string::npos : nl - pos);
      ++line_no;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        // An interrupted append leaves one partial line at the tail.
        if (last) break;
        throw Error(ErrorKind::repository, "repository.journal", "journal line " + std::to_string(line_no) + " is corrupt");
      }
      try {
        const auto op = j.at("op").get<std::string>();
        if (op == "create") {
          Artifact a;
          a.artifact_id = j.at("artifact_id").get<std::string>();
          a.meta = meta_from(j.at("meta"));
          a.created_at = j.at("created_at").get<std::string>();
          a.sequence = index->next_sequence++;
          index->artifacts[a.artifact_id] = std::move(a);
        } else if (op == "version") {
          auto it = index->artifacts.find(j.at("artifact_id").get<std::string>());
          if (it == index->artifacts.end()) throw std::runtime_error("version for unknown artifact");
          auto v = version_from(j.at("version"));
          const int expected = it->second.versions.empty() ? 1 : it->second.versions.back().version_id + 1;
          if (v.version_id != expected) throw std::runtime_error("non-monotonic version id");
          it->second.versions.push_back(std::move(v));
        } else {
          throw std::runtime_error("unknown op '" + op + "'");
        }
      } catch (const Error&) {
        throw;
      } catch (const std::exception& e) {
        throw Error(ErrorKind::repository, "repository.journal",
                    "journal line " + std::to_string(line_no) + ": " + e.what());
      }
      if (last) {
        // Complete record without trailing newline: keep it, terminate it.
        valid_end = text.size();
        break;
      }
      pos = nl + 1;
      valid_end = pos;
    }
    if (valid_end < text.size()) {
      fs::resize_file(path, valid_end);
    } else if (!text.empty() && text.back() != '\n') {
      std::ofstream(path, std::ios::app) << '\n';
    }
  }
  std::lock_guard lock(snapshot_mutex_);
  index_ = std::move(index);
}

void ArtifactRepository::append_journal(const std::string& line) {
  const auto path = root_ / kJournal;
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(ErrorKind::repository, "repository.io", "cannot open journal");
  const std::string rec = line + "\n";
  const auto n = ::write(fd, rec.data(), rec.size());
  ::fsync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(rec.size())) throw Error(ErrorKind::repository, "repository.io", "journal write failed");
}

std::string ArtifactRepository::create_artifact(const ArtifactMeta& meta) {
  if (meta.title.empty()) throw Error(ErrorKind::repository, "repository.invalid", "artifact title must not be empty");
  std::lock_guard lock(write_mutex_);
  auto next = std::make_shared<Index>(*snapshot());
  Artifact a;
  a.artifact_id = new_uuid();
  a.meta = meta;
  a.created_at = utc_timestamp();
  a.sequence = next->next_sequence++;
  ojson rec;
  rec["op"] = "create";
  rec["artifact_id"] = a.artifact_id;
  rec["meta"] = meta_json(meta);
  rec["created_at"] = a.created_at;
  append_journal(rec.dump());
  const auto id = a.artifact_id;
  next->artifacts[id] = std::move(a);
  std::lock_guard swap(snapshot_mutex_);
  index_ = std::move(next);
  return id;
}

void ArtifactRepository::check_size(const std::string& artifact_id, std::uint64_t size) const {
  const auto idx = snapshot();
  auto it = idx->artifacts.find(artifact_id);
  if (it == idx->artifacts.end()) not_found("artifact " + artifact_id);
  if (size > options_.version_limit) {
    throw Error(ErrorKind::repository, "repository.too_large",
                "archive of " + std::to_string(size) + " bytes exceeds the " + std::to_string(options_.version_limit) +
                    "-byte limit");
  }
  const auto total = it->second.total_bytes() + size;
  if (total > options_.artifact_limit) {
    throw Error(ErrorKind::repository, "repository.too_large",
                "artifact would hold " + std::to_string(total) + " bytes, over the " +
                    std::to_string(options_.artifact_limit) + "-byte total limit");
  }
}

ArtifactVersion ArtifactRepository::add_version(const std::string& artifact_id, std::string_view archive) {
  check_size(artifact_id, archive.size());
  unpack_tar_gz(archive);  // throws archive.corrupt
  const auto hash = sha256_hex(archive);
  const auto blob = root_ / "blobs" / hash;
  // Blob writes are idempotent by hash and happen outside the metadata lock.
  if (!fs::exists(blob) || sha256_file(blob) != hash) {
    const auto tmp = root_ / "blobs" / (hash + ".tmp-" + new_uuid());
    write_durably(tmp, archive);
    fs::rename(tmp, blob);
  }
  std::lock_guard lock(write_mutex_);
  check_size(artifact_id, archive.size());  // re-check against the latest state
  auto next = std::make_shared<Index>(*snapshot());
  auto& a = next->artifacts.at(artifact_id);
  ArtifactVersion v;
  v.version_id = a.versions.empty() ? 1 : a.versions.back().version_id + 1;
  v.created_at = utc_timestamp();
  v.content_hash = hash;
  v.size_bytes = archive.size();
  ojson rec;
  rec["op"] = "version";
  rec["artifact_id"] = artifact_id;
  rec["version"] = version_json(v);
  append_journal(rec.dump());
  a.versions.push_back(v);
  std::lock_guard swap(snapshot_mutex_);
  index_ = std::move(next);
  return v;
}

std::vector<Artifact> ArtifactRepository::list(std::string_view query, bool include_private) const {
  const auto idx = snapshot();
  const auto q = lower(query);
  std::vector<Artifact> out;
  for (const auto& [id, a] : idx->artifacts) {
    if (a.meta.visibility == Visibility::private_ && !include_private) continue;
    if (matches_query(a, q)) out.push_back(a);
  }
  std::sort(out.begin(), out.end(), [](const Artifact& x, const Artifact& y) { return x.sequence > y.sequence; });
  return out;
}

std::optional<Artifact> ArtifactRepository::get(const std::string& artifact_id, bool include_private) const {
  const auto idx = snapshot();
  auto it = idx->artifacts.find(artifact_id);
  if (it == idx->artifacts.end()) return std::nullopt;
  if (it->second.meta.visibility == Visibility::private_ && !include_private) return std::nullopt;
  return it->second;
}

std::string ArtifactRepository::download(const std::string& artifact_id, int version_id, bool include_private) const {
  const auto a = get(artifact_id, include_private);
  if (!a) not_found("artifact " + artifact_id);
  const auto* v = a->version(version_id);
  if (!v) not_found("version " + std::to_string(version_id) + " of artifact " + artifact_id);
  const auto blob = root_ / "blobs" / v->content_hash;
  if (!fs::exists(blob)) {
    throw Error(ErrorKind::repository, "repository.integrity", "blob " + v->content_hash + " is missing");
  }
  auto data = slurp(blob);
  if (sha256_hex(data) != v->content_hash) {
    throw Error(ErrorKind::repository, "repository.integrity", "blob " + v->content_hash + " fails its hash check");
  }
  return data;
}

RunHandle ArtifactRepository::launch(const std::string& artifact_id, int version_id, bool include_private) {
  const auto data = download(artifact_id, version_id, include_private);
  RunHandle h;
  h.handle_id = new_uuid();
  h.artifact_id = artifact_id;
  h.version_id = version_id;
  h.workspace_path = root_ / "workspaces" / h.handle_id;
  h.updated_at = utc_timestamp();
  update_run(h);
  try {
    extract_to(data, h.workspace_path);
  } catch (const Error& e) {
    h.state = RunState::failed;
    h.error = e.what();
    update_run(h);
    throw;
  }
  h.state = RunState::extracted;
  h.updated_at = utc_timestamp();
  update_run(h);
  return h;
}

std::optional<RunHandle> ArtifactRepository::run(const std::string& handle_id) const {
  std::lock_guard lock(runs_mutex_);
  auto it = runs_.find(handle_id);
  if (it == runs_.end()) return std::nullopt;
  return it->second;
}

void ArtifactRepository::update_run(const RunHandle& handle) {
  std::lock_guard lock(runs_mutex_);
  runs_[handle.handle_id] = handle;
}

FsckReport ArtifactRepository::fsck() const {
  const auto idx = snapshot();
  std::set<std::string> hashes;
  for (const auto& [id, a] : idx->artifacts) {
    for (const auto& v : a.versions) hashes.insert(v.content_hash);
  }
  FsckReport r;
  for (const auto& h : hashes) {
    const auto blob = root_ / "blobs" / h;
    if (!fs::exists(blob)) {
      r.missing.push_back(h);
      continue;
    }
    ++r.blobs_checked;
    if (sha256_file(blob) != h) r.mismatches.push_back(h);
  }
  return r;
}

}  // namespace cb
