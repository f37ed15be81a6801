#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cb/repository.hpp"

namespace cb {

// Runs the experiment found in a launched workspace. Reports (completed,
// total) repetitions through `progress` and returns the run id; throws on
// failure.
using LaunchRunner = std::function<std::string(const std::filesystem::path& workspace, std::uint64_t seed,
                                               const std::function<void(int, int)>& progress)>;

struct ServiceOptions {
  // Bearer token for mutating endpoints; empty leaves them open. Presenting
  // it on reads also reveals private artifacts.
  std::string token;
  std::optional<std::filesystem::path> ui_dir;  // static files mounted at /
  LaunchRunner runner;                          // enables run chaining on launch
};

// REST front end over an ArtifactRepository:
//   GET  /artifacts?query=                       summaries, newest first
//   POST /artifacts                              JSON metadata -> 201
//   GET  /artifacts/{id}                         full metadata
//   POST /artifacts/{id}/versions                archive body -> 201 (411, 413)
//   GET  /artifacts/{id}/versions/{v}/download   archive bytes
//   POST /artifacts/{id}/versions/{v}/launch     RunHandle -> 201 (?run=0 to only extract)
//   GET  /runs/{handle}                          RunHandle
class RepositoryService {
 public:
  RepositoryService(ArtifactRepository& repo, ServiceOptions options);
  ~RepositoryService();
  RepositoryService(const RepositoryService&) = delete;
  RepositoryService& operator=(const RepositoryService&) = delete;

  // Port 0 picks a free one; returns the bound port.
  int bind(const std::string& host, int port);
  void serve();  // blocks until stop()
  void start();  // serve() on a background thread
  void stop();
  // Blocks until every chained run has finished.
  void wait_for_runs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Thin HTTP client for the endpoints above. Non-2xx replies become
// Error(repository, "repository.http_<status>").
class RepositoryClient {
 public:
  RepositoryClient(std::string url, std::string token = {});

  std::string create_artifact(const ArtifactMeta& meta);  // artifact id
  ArtifactVersion upload(const std::string& artifact_id, const std::string& archive);
  std::string download(const std::string& artifact_id, int version_id);
  std::string list_json(const std::string& query = {});
  std::string get_json(const std::string& artifact_id);
  RunHandle launch(const std::string& artifact_id, int version_id, bool run = true, std::uint64_t seed = 0);
  RunHandle run_status(const std::string& handle_id);

 private:
  std::string url_;
  std::string token_;
};

}  // namespace cb
