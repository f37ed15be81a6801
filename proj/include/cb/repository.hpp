#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cb {

enum class Visibility { public_, private_ };

const char* to_string(Visibility v) noexcept;
Visibility parse_visibility(std::string_view text);

struct ArtifactVersion {
  int version_id = 0;
  std::string created_at;
  std::string content_hash;  // sha256 hex of the archive
  std::uint64_t size_bytes = 0;

  bool operator==(const ArtifactVersion&) const = default;
};

struct ArtifactMeta {
  std::string title;
  std::vector<std::string> authors;
  std::string description;
  std::vector<std::string> tags;
  Visibility visibility = Visibility::public_;
  std::vector<std::string> links;

  bool operator==(const ArtifactMeta&) const = default;
};

struct Artifact {
  std::string artifact_id;  // UUID
  ArtifactMeta meta;
  std::string created_at;
  std::uint64_t sequence = 0;  // creation order
  std::vector<ArtifactVersion> versions;

  std::uint64_t total_bytes() const;
  const ArtifactVersion* version(int version_id) const;
  bool operator==(const Artifact&) const = default;
};

enum class RunState { created, extracted, running, finished, failed };

const char* to_string(RunState s) noexcept;

struct RunHandle {
  std::string handle_id;
  std::string artifact_id;
  int version_id = 0;
  std::filesystem::path workspace_path;
  RunState state = RunState::created;
  int completed = 0;  // repetitions done
  int total = 0;
  std::string error;
  std::string run_id;
  std::string updated_at;
};

struct RepositoryOptions {
  std::uint64_t version_limit = 500'000'000;   // bytes per uploaded archive
  std::uint64_t artifact_limit = 500'000'000;  // bytes summed over an artifact's versions
};

struct FsckReport {
  std::size_t blobs_checked = 0;
  std::vector<std::string> mismatches;  // content_hash of blobs whose bytes no longer hash to it
  std::vector<std::string> missing;     // referenced but absent

  bool clean() const { return mismatches.empty() && missing.empty(); }
};

// Filesystem-backed artifact store under `root`:
//   blobs/<sha256>      archive bytes, content addressed
//   journal.jsonl       append-only metadata events, replayed on open
//   workspaces/<id>/    launched workspaces
// Mutations are serialised; readers work on an immutable snapshot and never
// wait for a writer. Errors are Error(repository, "repository.*").
class ArtifactRepository {
 public:
  explicit ArtifactRepository(std::filesystem::path root, RepositoryOptions options = {});
  ~ArtifactRepository();
  ArtifactRepository(const ArtifactRepository&) = delete;
  ArtifactRepository& operator=(const ArtifactRepository&) = delete;

  const std::filesystem::path& root() const { return root_; }
  const RepositoryOptions& options() const { return options_; }

  std::string create_artifact(const ArtifactMeta& meta);

  // Throws repository.too_large when `size` would break either limit.
  void check_size(const std::string& artifact_id, std::uint64_t size) const;
  // Validates the archive (gzip + tar), stores the blob and appends a version.
  ArtifactVersion add_version(const std::string& artifact_id, std::string_view archive);

  // Newest first. `query` matches title, description, authors or tags
  // (case-insensitive substring); private artifacts only when asked.
  std::vector<Artifact> list(std::string_view query = {}, bool include_private = false) const;
  std::optional<Artifact> get(const std::string& artifact_id, bool include_private = false) const;

  // Re-verifies the blob hash before returning it (repository.integrity).
  std::string download(const std::string& artifact_id, int version_id, bool include_private = false) const;

  // Extracts the version into workspaces/<handle>; state `extracted`.
  RunHandle launch(const std::string& artifact_id, int version_id, bool include_private = false);
  std::optional<RunHandle> run(const std::string& handle_id) const;
  void update_run(const RunHandle& handle);

  FsckReport fsck() const;

 private:
  struct Index;
  std::shared_ptr<const Index> snapshot() const;
  void append_journal(const std::string& line);
  void replay();

  std::filesystem::path root_;
  RepositoryOptions options_;

  std::mutex write_mutex_;            // serialises mutations
  mutable std::mutex snapshot_mutex_;  // guards the pointer swap only
  std::shared_ptr<const Index> index_;

  mutable std::mutex runs_mutex_;
  std::map<std::string, RunHandle> runs_;
};

std::string artifact_to_json(const Artifact& a);
std::string artifact_summary_json(const std::vector<Artifact>& artifacts);
std::string version_to_json(const ArtifactVersion& v);
std::string run_handle_to_json(const RunHandle& h);
ArtifactMeta meta_from_json(std::string_view json);
ArtifactVersion version_from_json(std::string_view json);
RunHandle run_handle_from_json(std::string_view json);

}  // namespace cb
