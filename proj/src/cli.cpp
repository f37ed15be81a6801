#include "cb/cli.hpp"

#include <yaml-cpp/yaml.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cb/archive.hpp"
#include "cb/digest.hpp"
#include "cb/error.hpp"
#include "cb/metrics.hpp"
#include "cb/pipeline.hpp"
#include "cb/repository.hpp"
#include "cb/service.hpp"

namespace fs = std::filesystem;

namespace cb {

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

std::string one_line(std::string s) {
  while (!s.empty() && s.back() == '\n') s.pop_back();
  for (std::size_t p = s.find('\n'); p != std::string::npos; p = s.find('\n', p)) s.replace(p, 1, "; ");
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::usage, "usage.file", "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_out(const fs::path& p, std::string_view data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::usage, "usage.file", "cannot write " + p.string());
}

// Options shared by validate, deploy and run.
struct ExperimentFlags {
  std::string dir = ".";
  std::optional<std::uint64_t> seed;
  std::string provider;
  std::vector<std::string> overrides;
  std::string profiles;

  void attach(CLI::App* cmd, bool with_provider) {
    cmd->add_option("--dir", dir, "experiment directory")->capture_default_str();
    cmd->add_option("--profiles", profiles, "additional profiles.yaml");
    if (!with_provider) return;
    cmd->add_option("--seed", seed, "random seed (default: global.seed, else 0)");
    cmd->add_option("--provider", provider, "provider for every environment (simulated|mock)")
        ->check(CLI::IsMember({"simulated", "mock"}));
    cmd->add_option("--set", overrides, "override, e.g. rate=25Kbit or param.approach=cloud_centric");
  }

  RunRequest request() const {
    RunRequest r;
    r.dir = dir;
    r.seed = seed;
    r.provider = provider;
    r.overrides = overrides;
    if (!profiles.empty()) r.profiles = fs::path(profiles);
    return r;
  }
};

std::vector<PairingEntry> load_pairing(const fs::path& path) {
  std::vector<PairingEntry> out;
  try {
    const auto root = YAML::Load(slurp(path));
    if (!root.IsSequence()) throw Error(ErrorKind::usage, "usage.pairing", "pairing file must be a list");
    for (const auto& n : root) {
      PairingEntry e;
      e.name = n["name"].as<std::string>();
      e.metric = n["metric"].as<std::string>();
      e.treatment1 = n["treatment1"].as<std::string>();
      e.treatment2 = n["treatment2"].as<std::string>();
      if (n["hosts"]) e.hosts = n["hosts"].as<std::string>();
      out.push_back(std::move(e));
    }
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::usage, "usage.pairing", path.string() + ": " + e.what());
  }
  return out;
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

LaunchRunner cli_runner(std::ostream& log) {
  return [&log](const fs::path& workspace, std::uint64_t seed, const std::function<void(int, int)>& progress) {
    RunRequest r;
    r.dir = workspace;
    if (seed != 0) r.seed = seed;
    r.on_repetition = progress;
    auto outcome = run_experiment(r);
    log << "run " << outcome.run.run_id << " " << to_string(outcome.run.status) << " in " << workspace.string()
        << "\n";
    if (outcome.run.status != RunStatus::succeeded) {
      throw Error(ErrorKind::execution, "execution.failed", "run " + outcome.run.run_id + " failed");
    }
    return outcome.run.run_id;
  };
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Experiment orchestration across edge/fog/cloud testbeds", "cb"};
  app.require_subcommand(1);

  // validate
  ExperimentFlags vflags;
  bool vjson = false;
  auto* validate_cmd = app.add_subcommand("validate", "check the three experiment documents");
  vflags.attach(validate_cmd, false);
  validate_cmd->add_flag("--json", vjson, "machine-readable output");

  // deploy
  ExperimentFlags dflags;
  auto* deploy_cmd = app.add_subcommand("deploy", "acquire resources and print the deployment plan");
  dflags.attach(deploy_cmd, true);

  // run
  ExperimentFlags rflags;
  std::string results;
  std::string label;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "deploy, execute the workflow and collect results");
  rflags.attach(run_cmd, true);
  run_cmd->add_option("--results", results, "results root (default: <dir>/results)");
  run_cmd->add_option("--label", label, "run label used by compare, e.g. hybrid-15kbit");
  run_cmd->add_flag("--quiet", quiet, "print only the run directory");

  // report
  std::string report_run;
  std::string report_metric;
  bool report_csv = false;
  auto* report_cmd = app.add_subcommand("report", "summarise one run or a campaign of runs");
  report_cmd->add_option("--run", report_run, "run directory or results root")->required();
  report_cmd->add_option("--metric", report_metric, "only this metric");
  report_cmd->add_flag("--csv", report_csv, "CSV instead of the text table");

  // compare
  std::string cmp_a;
  std::string cmp_b;
  std::string cmp_pairing;
  bool cmp_json = false;
  auto* compare_cmd = app.add_subcommand("compare", "replicability accuracy between two campaigns");
  compare_cmd->add_option("--a", cmp_a, "authors' results")->required();
  compare_cmd->add_option("--b", cmp_b, "readers' results")->required();
  compare_cmd->add_option("--pairing", cmp_pairing, "YAML list of {name, metric, treatment1, treatment2, hosts}");
  compare_cmd->add_flag("--json", cmp_json, "machine-readable output");

  // package
  std::string pkg_dir;
  std::string pkg_out;
  auto* package_cmd = app.add_subcommand("package", "pack a directory into a deterministic .tar.gz");
  package_cmd->add_option("--dir", pkg_dir)->required();
  package_cmd->add_option("--out", pkg_out)->required();

  // publish
  std::string pub_file;
  std::string pub_url = env_or("CB_REPO_URL");
  std::string pub_token = env_or("CB_REPO_TOKEN");
  std::string pub_artifact;
  ArtifactMeta pub_meta;
  std::string pub_visibility = "public";
  auto* publish_cmd = app.add_subcommand("publish", "upload an archive as a new artifact version");
  publish_cmd->add_option("--file", pub_file)->required();
  publish_cmd->add_option("--url", pub_url, "repository URL (CB_REPO_URL)");
  publish_cmd->add_option("--token", pub_token, "bearer token (CB_REPO_TOKEN)");
  publish_cmd->add_option("--artifact", pub_artifact, "existing artifact id; a new artifact is created otherwise");
  publish_cmd->add_option("--title", pub_meta.title);
  publish_cmd->add_option("--author", pub_meta.authors);
  publish_cmd->add_option("--description", pub_meta.description);
  publish_cmd->add_option("--tag", pub_meta.tags);
  publish_cmd->add_option("--link", pub_meta.links);
  publish_cmd->add_option("--visibility", pub_visibility)->check(CLI::IsMember({"public", "private"}));

  // launch
  std::string l_url = env_or("CB_REPO_URL");
  std::string l_token = env_or("CB_REPO_TOKEN");
  std::string l_artifact;
  int l_version = 0;
  std::string l_workspace;
  bool l_run = false;
  bool l_remote = false;
  std::optional<std::uint64_t> l_seed;
  auto* launch_cmd = app.add_subcommand("launch", "download an artifact version into a fresh workspace");
  launch_cmd->add_option("--url", l_url, "repository URL (CB_REPO_URL)");
  launch_cmd->add_option("--token", l_token, "bearer token (CB_REPO_TOKEN)");
  launch_cmd->add_option("--artifact", l_artifact)->required();
  launch_cmd->add_option("--version", l_version)->required()->check(CLI::PositiveNumber);
  launch_cmd->add_option("--workspace", l_workspace, "local workspace directory");
  launch_cmd->add_flag("--run", l_run, "execute the experiment after extraction");
  launch_cmd->add_flag("--remote", l_remote, "launch on the server and follow its run status");
  launch_cmd->add_option("--seed", l_seed);

  // serve
  std::string s_root;
  std::string s_addr = "127.0.0.1:8080";
  std::string s_token = env_or("CB_REPO_TOKEN");
  std::uint64_t s_limit = RepositoryOptions{}.version_limit;
  std::string s_ui;
  auto* serve_cmd = app.add_subcommand("serve", "run the artifact repository service");
  serve_cmd->add_option("--root", s_root, "storage directory")->required();
  serve_cmd->add_option("--addr", s_addr, "HOST:PORT")->capture_default_str();
  serve_cmd->add_option("--token", s_token, "bearer token for mutations (CB_REPO_TOKEN)");
  serve_cmd->add_option("--size-limit", s_limit, "bytes per version and per artifact")->capture_default_str();
  serve_cmd->add_option("--with-ui", s_ui, "directory of static portal files");

  // fsck
  std::string f_root;
  auto* fsck_cmd = app.add_subcommand("fsck", "re-hash every stored archive");
  fsck_cmd->add_option("--root", f_root)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // app.help() already switches to the selected subcommand.
      out << app.help();
      return 0;
    }
    err << "error: usage: " << one_line(e.what()) << "\n";
    return exit_code(ErrorKind::usage);
  }

  try {
    if (*validate_cmd) {
      const auto catalog = load_catalog(vflags.dir, vflags.profiles.empty() ? std::nullopt
                                                                            : std::optional<fs::path>(vflags.profiles));
      const auto loaded = check_experiment(vflags.dir, catalog);
      out << (vjson ? render_json(loaded.issues) + "\n" : render_text(loaded.issues));
      if (has_errors(loaded.issues)) return exit_code(ErrorKind::validation);
      if (!vjson) out << "ok: " << vflags.dir << " is valid\n";
      return 0;
    }

    if (*deploy_cmd) {
      const auto d = deploy_experiment(dflags.request());
      out << render_text(d.prepared.warnings);
      out << plan_to_json(d.plan) << "\n";
      return 0;
    }

    if (*run_cmd) {
      auto req = rflags.request();
      if (!results.empty()) req.results_root = results;
      req.label = label;
      const auto outcome = run_experiment(req);
      const auto digest = sha256_file(outcome.run_dir / "samples.csv");
      if (quiet) {
        out << outcome.run_dir.string() << "\n";
      } else {
        out << "run_id: " << outcome.run.run_id << "\n"
            << "status: " << to_string(outcome.run.status) << "\n"
            << "repetitions: " << outcome.run.repetitions.size() << "/" << outcome.run.planned_repetitions << "\n"
            << "virtual_elapsed: " << format_duration(outcome.run.virtual_elapsed) << "\n"
            << "results: " << outcome.run_dir.string() << "\n"
            << "samples_sha256: " << digest << "\n";
      }
      if (outcome.run.status != RunStatus::succeeded) {
        err << "error: execution.failed: run " << outcome.run.run_id << " finished with failed tasks, see "
            << (outcome.run_dir / "tasks.log").string() << "\n";
        return exit_code(ErrorKind::execution);
      }
      return 0;
    }

    if (*report_cmd) {
      const auto runs = load_runs(report_run);
      if (runs.empty()) throw Error(ErrorKind::usage, "results.missing", "no runs below " + report_run);
      const auto rows = summarize_runs(runs, report_metric.empty() ? std::nullopt
                                                                   : std::optional<std::string>(report_metric));
      if (rows.empty()) throw Error(ErrorKind::usage, "report.no_samples", "no matching samples");
      out << (report_csv ? summary_csv(rows) : summary_text(rows));
      return 0;
    }

    if (*compare_cmd) {
      const auto pairing = cmp_pairing.empty() ? savanna_pairing() : load_pairing(cmp_pairing);
      const auto report = compare_runs(load_runs(cmp_a), load_runs(cmp_b), pairing);
      out << (cmp_json ? render_json(report) : render_text(report));
      return 0;
    }

    if (*package_cmd) {
      const auto data = package_directory(pkg_dir);
      write_out(pkg_out, data);
      out << pkg_out << " " << data.size() << " bytes sha256 " << sha256_hex(data) << "\n";
      return 0;
    }

    if (*publish_cmd) {
      if (pub_url.empty()) throw Error(ErrorKind::usage, "usage.url", "--url or CB_REPO_URL is required");
      const auto data = slurp(pub_file);
      RepositoryClient client(pub_url, pub_token);
      std::string id = pub_artifact;
      if (id.empty()) {
        if (pub_meta.title.empty()) {
          auto stem = fs::path(pub_file).filename().string();
          pub_meta.title = stem.substr(0, stem.find('.'));
        }
        pub_meta.visibility = parse_visibility(pub_visibility);
        id = client.create_artifact(pub_meta);
      }
      const auto v = client.upload(id, data);
      out << "artifact_id: " << id << "\n"
          << "version: " << v.version_id << "\n"
          << "content_hash: " << v.content_hash << "\n"
          << "size_bytes: " << v.size_bytes << "\n";
      return 0;
    }

    if (*launch_cmd) {
      if (l_url.empty()) throw Error(ErrorKind::usage, "usage.url", "--url or CB_REPO_URL is required");
      RepositoryClient client(l_url, l_token);
      if (l_remote) {
        auto h = client.launch(l_artifact, l_version, l_run, l_seed.value_or(0));
        out << "handle: " << h.handle_id << "\n";
        while (h.state == RunState::created || (l_run && (h.state == RunState::extracted || h.state == RunState::running))) {
          std::this_thread::sleep_for(std::chrono::seconds(1));
          h = client.run_status(h.handle_id);
          if (!l_run && h.state == RunState::extracted) break;
        }
        out << "state: " << to_string(h.state) << "\n" << "workspace: " << h.workspace_path.string() << "\n";
        if (!h.run_id.empty()) out << "run_id: " << h.run_id << "\n";
        if (h.state == RunState::failed) {
          err << "error: execution.failed: " << one_line(h.error) << "\n";
          return exit_code(ErrorKind::execution);
        }
        return 0;
      }
      if (l_workspace.empty()) throw Error(ErrorKind::usage, "usage.workspace", "--workspace is required");
      if (fs::exists(l_workspace) && !fs::is_empty(l_workspace)) {
        throw Error(ErrorKind::usage, "usage.workspace", "workspace " + l_workspace + " is not empty");
      }
      const auto data = client.download(l_artifact, l_version);
      extract_to(data, l_workspace);
      out << "workspace: " << l_workspace << "\n";
      if (l_run) {
        RunRequest r;
        r.dir = l_workspace;
        r.seed = l_seed;
        const auto outcome = run_experiment(r);
        out << "run_id: " << outcome.run.run_id << "\n"
            << "status: " << to_string(outcome.run.status) << "\n"
            << "results: " << outcome.run_dir.string() << "\n";
        if (outcome.run.status != RunStatus::succeeded) return exit_code(ErrorKind::execution);
      }
      return 0;
    }

    if (*serve_cmd) {
      const auto colon = s_addr.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorKind::usage, "usage.addr", "--addr must be HOST:PORT");
      int port = 0;
      try {
        port = std::stoi(s_addr.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorKind::usage, "usage.addr", "bad port in --addr");
      }
      ArtifactRepository repo(s_root, RepositoryOptions{s_limit, s_limit});
      ServiceOptions opts;
      opts.token = s_token;
      if (s_token.empty()) err << "warning: no --token set; uploads and launches are open to anyone\n";
      if (!s_ui.empty()) opts.ui_dir = fs::path(s_ui);
      opts.runner = cli_runner(err);
      RepositoryService service(repo, opts);
      const int bound = service.bind(s_addr.substr(0, colon), port);
      out << "listening on http://" << s_addr.substr(0, colon) << ":" << bound << std::endl;
      g_stop = false;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.start();
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
      service.wait_for_runs();
      return 0;
    }

    if (*fsck_cmd) {
      ArtifactRepository repo(f_root);
      const auto r = repo.fsck();
      out << "blobs checked: " << r.blobs_checked << "\n"
          << "hash mismatches: " << r.mismatches.size() << "\n"
          << "missing blobs: " << r.missing.size() << "\n";
      for (const auto& h : r.mismatches) out << "mismatch " << h << "\n";
      for (const auto& h : r.missing) out << "missing " << h << "\n";
      if (!r.clean()) {
        err << "error: repository.integrity: " << (r.mismatches.size() + r.missing.size()) << " damaged blob(s)\n";
        return exit_code(ErrorKind::repository);
      }
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << one_line(e.what()) << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: usage.io: " << one_line(e.what()) << "\n";
    return exit_code(ErrorKind::usage);
  }
  return exit_code(ErrorKind::usage);
}

}  // namespace cb
