#include "cb/service.hpp"

#include <charconv>
#include <mutex>
#include <thread>

#include "cb/config.hpp"
#include "cb/error.hpp"
#include "cb/units.hpp"
#include "httplib.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace cb {

namespace {

constexpr const char* kJson = "application/json";

int status_for(const Error& e) {
  const auto& c = e.code();
  if (c == "repository.not_found") return 404;
  if (c == "repository.too_large") return 413;
  if (c == "repository.unauthorized") return 401;
  if (c == "repository.invalid" || c == "archive.corrupt" || c.rfind("archive.", 0) == 0) return 400;
  return 500;
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  res.status = status;
  nlohmann::ordered_json j{{"error", code}, {"message", message}};
  res.set_content(j.dump() + "\n", kJson);
}

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.rfind(prefix, 0) == 0) return h.substr(prefix.size());
  return req.get_header_value("X-Token");
}

bool has_experiment(const fs::path& dir) {
  return fs::exists(dir / kLayersFile) && fs::exists(dir / kNetworkFile) && fs::exists(dir / kWorkflowFile);
}

int parse_version(const std::string& text) {
  int v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || v < 1) {
    throw Error(ErrorKind::repository, "repository.not_found", "version " + text + " not found");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

struct RepositoryService::Impl {
  ArtifactRepository& repo;
  ServiceOptions options;
  httplib::Server server;
  std::thread serve_thread;
  std::mutex runs_mutex;
  std::vector<std::thread> runs;

  Impl(ArtifactRepository& r, ServiceOptions o) : repo(r), options(std::move(o)) {}

  bool authorized(const httplib::Request& req) const { return options.token.empty() || bearer(req) == options.token; }
  bool sees_private(const httplib::Request& req) const {
    return !options.token.empty() && bearer(req) == options.token;
  }

  // Wraps a handler so repository errors become JSON error replies.
  template <typename F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e), e.code(), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  bool require_token(const httplib::Request& req, httplib::Response& res) const {
    if (authorized(req)) return true;
    send_error(res, 401, "repository.unauthorized", "missing or invalid bearer token");
    return false;
  }

  void chain_run(RunHandle handle, std::uint64_t seed) {
    std::lock_guard lock(runs_mutex);
    runs.emplace_back([this, handle, seed]() mutable {
      handle.state = RunState::running;
      handle.updated_at = utc_timestamp();
      repo.update_run(handle);
      try {
        handle.run_id = options.runner(handle.workspace_path, seed, [&](int done, int total) {
          handle.completed = done;
          handle.total = total;
          handle.updated_at = utc_timestamp();
          repo.update_run(handle);
        });
        handle.state = RunState::finished;
      } catch (const std::exception& e) {
        handle.state = RunState::failed;
        handle.error = e.what();
      }
      handle.updated_at = utc_timestamp();
      repo.update_run(handle);
    });
  }

  void routes() {
    // One request per connection: an upload rejected before its body was
    // read must not leave those bytes to be parsed as the next request.
    server.set_keep_alive_max_count(1);

    if (options.ui_dir) server.set_mount_point("/", options.ui_dir->string());

    server.Get("/artifacts", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto query = req.has_param("query") ? req.get_param_value("query") : std::string();
      res.set_content(artifact_summary_json(repo.list(query, sees_private(req))), kJson);
    }));

    server.Post("/artifacts", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!require_token(req, res)) return;
      const auto id = repo.create_artifact(meta_from_json(req.body));
      res.status = 201;
      res.set_header("Location", "/artifacts/" + id);
      res.set_content(artifact_to_json(*repo.get(id, true)), kJson);
    }));

    server.Get(R"(/artifacts/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto a = repo.get(req.matches[1], sees_private(req));
      if (!a) throw Error(ErrorKind::repository, "repository.not_found", "artifact not found");
      res.set_content(artifact_to_json(*a), kJson);
    }));

    server.Post(R"(/artifacts/([^/]+)/versions)",
                [this](const httplib::Request& req, httplib::Response& res, const httplib::ContentReader& reader) {
                  try {
                    if (!require_token(req, res)) return;
                    const std::string id = req.matches[1];
                    if (!repo.get(id, true)) {
                      throw Error(ErrorKind::repository, "repository.not_found", "artifact not found");
                    }
                    std::string body;
                    if (req.has_header("Content-Length")) {
                      const auto text = req.get_header_value("Content-Length");
                      std::uint64_t length = 0;
                      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), length);
                      if (ec != std::errc{} || p != text.data() + text.size()) {
                        send_error(res, 400, "repository.invalid", "bad Content-Length");
                        return;
                      }
                      repo.check_size(id, length);  // rejects before a byte of the body is read
                      body.reserve(length);
                    } else if (req.get_header_value("Transfer-Encoding") != "chunked") {
                      send_error(res, 411, "repository.length_required", "Content-Length is required");
                      return;
                    }
                    bool over = false;
                    reader([&](const char* data, std::size_t n) {
                      body.append(data, n);
                      if (body.size() > repo.options().version_limit) {
                        over = true;
                        return false;
                      }
                      return true;
                    });
                    if (over) repo.check_size(id, body.size());
                    const auto v = repo.add_version(id, body);
                    res.status = 201;
                    res.set_content(version_to_json(v), kJson);
                  } catch (const Error& e) {
                    send_error(res, status_for(e), e.code(), e.what());
                  } catch (const std::exception& e) {
                    send_error(res, 500, "internal", e.what());
                  }
                });

    server.Get(R"(/artifacts/([^/]+)/versions/([^/]+)/download)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto data = repo.download(req.matches[1], parse_version(req.matches[2]), sees_private(req));
                 res.set_content(std::move(data), "application/gzip");
               }));

    server.Post(R"(/artifacts/([^/]+)/versions/([^/]+)/launch)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  if (!require_token(req, res)) return;
                  std::uint64_t seed = 0;
                  if (!req.body.empty()) {
                    try {
                      seed = nlohmann::json::parse(req.body).value("seed", std::uint64_t{0});
                    } catch (const nlohmann::json::exception& e) {
                      throw Error(ErrorKind::repository, "repository.invalid", std::string("bad launch body: ") + e.what());
                    }
                  }
                  const bool want_run = !(req.has_param("run") && req.get_param_value("run") == "0");
                  auto handle = repo.launch(req.matches[1], parse_version(req.matches[2]), sees_private(req));
                  if (want_run && options.runner && has_experiment(handle.workspace_path)) chain_run(handle, seed);
                  res.status = 201;
                  res.set_content(run_handle_to_json(handle), kJson);
                }));

    server.Get(R"(/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto h = repo.run(req.matches[1]);
      if (!h) throw Error(ErrorKind::repository, "repository.not_found", "run handle not found");
      res.set_content(run_handle_to_json(*h), kJson);
    }));
  }
};

RepositoryService::RepositoryService(ArtifactRepository& repo, ServiceOptions options)
    : impl_(std::make_unique<Impl>(repo, std::move(options))) {
  impl_->routes();
}

RepositoryService::~RepositoryService() {
  stop();
  wait_for_runs();
}

int RepositoryService::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw Error(ErrorKind::repository, "repository.bind", "cannot listen on " + host + ":" + std::to_string(port));
  }
  return bound;
}

void RepositoryService::serve() { impl_->server.listen_after_bind(); }

void RepositoryService::start() {
  impl_->serve_thread = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
}

void RepositoryService::stop() {
  impl_->server.stop();
  if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
}

void RepositoryService::wait_for_runs() {
  std::vector<std::thread> runs;
  {
    std::lock_guard lock(impl_->runs_mutex);
    runs.swap(impl_->runs);
  }
  for (auto& t : runs) t.join();
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void http_failure(const httplib::Result& r, const std::string& what) {
  if (!r) {
    throw Error(ErrorKind::repository, "repository.unreachable", what + ": " + httplib::to_string(r.error()));
  }
  std::string message = r->body;
  try {
    const auto j = nlohmann::json::parse(r->body);
    if (j.is_object() && j.contains("message")) message = j["message"].get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  while (!message.empty() && message.back() == '\n') message.pop_back();
  throw Error(ErrorKind::repository, "repository.http_" + std::to_string(r->status), what + ": " + message);
}

}  // namespace

RepositoryClient::RepositoryClient(std::string url, std::string token) : url_(std::move(url)), token_(std::move(token)) {
  while (!url_.empty() && url_.back() == '/') url_.pop_back();
  if (url_.empty()) throw Error(ErrorKind::usage, "usage.url", "repository URL is empty");
}

namespace {

httplib::Client make_client(const std::string& url, const std::string& token) {
  httplib::Client c(url);
  c.set_read_timeout(300, 0);
  c.set_write_timeout(300, 0);
  if (!token.empty()) c.set_bearer_token_auth(token);
  return c;
}

}  // namespace

std::string RepositoryClient::create_artifact(const ArtifactMeta& meta) {
  auto c = make_client(url_, token_);
  nlohmann::ordered_json j{{"title", meta.title},         {"authors", meta.authors}, {"description", meta.description},
                           {"tags", meta.tags},           {"visibility", to_string(meta.visibility)},
                           {"links", meta.links}};
  auto r = c.Post("/artifacts", j.dump(), kJson);
  if (!r || r->status != 201) http_failure(r, "create artifact");
  return nlohmann::json::parse(r->body).at("artifact_id").get<std::string>();
}

ArtifactVersion RepositoryClient::upload(const std::string& artifact_id, const std::string& archive) {
  auto c = make_client(url_, token_);
  auto r = c.Post("/artifacts/" + artifact_id + "/versions", archive, "application/gzip");
  if (!r || r->status != 201) http_failure(r, "upload version");
  return version_from_json(r->body);
}

std::string RepositoryClient::download(const std::string& artifact_id, int version_id) {
  auto c = make_client(url_, token_);
  auto r = c.Get("/artifacts/" + artifact_id + "/versions/" + std::to_string(version_id) + "/download");
  if (!r || r->status != 200) http_failure(r, "download");
  return r->body;
}

std::string RepositoryClient::list_json(const std::string& query) {
  auto c = make_client(url_, token_);
  httplib::Params params;
  if (!query.empty()) params.emplace("query", query);
  auto r = c.Get("/artifacts", params, httplib::Headers{});
  if (!r || r->status != 200) http_failure(r, "list artifacts");
  return r->body;
}

std::string RepositoryClient::get_json(const std::string& artifact_id) {
  auto c = make_client(url_, token_);
  auto r = c.Get("/artifacts/" + artifact_id);
  if (!r || r->status != 200) http_failure(r, "get artifact");
  return r->body;
}

RunHandle RepositoryClient::launch(const std::string& artifact_id, int version_id, bool run, std::uint64_t seed) {
  auto c = make_client(url_, token_);
  const auto path = "/artifacts/" + artifact_id + "/versions/" + std::to_string(version_id) + "/launch" +
                    (run ? "" : "?run=0");
  auto r = c.Post(path, nlohmann::json{{"seed", seed}}.dump(), kJson);
  if (!r || r->status != 201) http_failure(r, "launch");
  return run_handle_from_json(r->body);
}

RunHandle RepositoryClient::run_status(const std::string& handle_id) {
  auto c = make_client(url_, token_);
  auto r = c.Get("/runs/" + handle_id);
  if (!r || r->status != 200) http_failure(r, "run status");
  return run_handle_from_json(r->body);
}

}  // namespace cb
