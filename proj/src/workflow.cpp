#include "cb/workflow.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "cb/digest.hpp"
#include "cb/error.hpp"
#include "cb/netem.hpp"
#include "cb/sim.hpp"
#include "cb/workload.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace cb {

const char* to_string(RunStatus status) noexcept {
  switch (status) {
    case RunStatus::pending: return "pending";
    case RunStatus::running: return "running";
    case RunStatus::succeeded: return "succeeded";
    case RunStatus::failed: return "failed";
  }
  return "?";
}

const char* to_string(TaskOutcome outcome) noexcept {
  switch (outcome) {
    case TaskOutcome::ok: return "ok";
    case TaskOutcome::failed: return "failed";
    case TaskOutcome::skipped: return "skipped";
  }
  return "?";
}

std::vector<MetricSample> ExperimentRun::all_samples() const {
  std::vector<MetricSample> out;
  for (const auto& rep : repetitions) out.insert(out.end(), rep.samples.begin(), rep.samples.end());
  return out;
}

// ---------------------------------------------------------------------------
// Built-in simulated applications
// ---------------------------------------------------------------------------

namespace {

WorkloadSpec spec_for(const AppContext& ctx, const ParamMap& params) {
  auto spec = workload_from_params(params);
  if (ctx.interval.count() > 0) spec.interval = ctx.interval;
  return spec;
}

const Host& cloud_host(const DeploymentPlan& plan, const WorkloadSpec& spec) {
  const auto clouds = plan.layer_hosts(spec.cloud_layer);
  if (clouds.size() != 1) {
    throw Error(ErrorKind::execution, "workload.roles",
                "expected exactly one host in layer '" + spec.cloud_layer + "', found " +
                    std::to_string(clouds.size()));
  }
  return *clouds.front();
}

AppResult savanna_client(const AppContext& ctx) {
  const auto spec = spec_for(ctx, ctx.params);
  const Host& cloud = cloud_host(ctx.plan, spec);
  AppResult r;
  if (ctx.repetition < 0) {
    r.output = "client ready (" + std::string(to_string(spec.approach)) + ")";
    return r;
  }
  const auto& link = ctx.plan.links.lookup(ctx.host.id, cloud.id);
  r.samples = device_samples(spec, ctx.host, cloud, link, ctx.repetition, ctx.seed);
  for (const auto& s : r.samples) {
    if (s.metric == "processing_time_s") r.duration = Seconds(s.value);
  }
  r.output = std::string(to_string(spec.approach)) + " image processed in " + format_duration(r.duration);
  return r;
}

AppResult savanna_server(const AppContext& ctx) {
  const auto spec = spec_for(ctx, ctx.params);
  AppResult r;
  if (ctx.repetition < 0) {
    r.output = "server ready";
    return r;
  }
  // The server's load is the sum of what every edge device sends its way.
  std::vector<ProcessingSample> work;
  for (const auto* edge : ctx.plan.layer_hosts(spec.edge_layer)) {
    const auto* svc = ctx.config.layers.find_service(edge->layer, edge->service);
    ParamMap params = svc ? svc->params : ParamMap{};
    auto app = params.find("app");
    if (app != params.end() && app->second != "savanna-client") continue;
    const auto edge_spec = spec_for(ctx, params);
    const auto& link = ctx.plan.links.lookup(edge->id, ctx.host.id);
    work.push_back(simulate_image_pipeline(edge_spec, edge->profile, ctx.host.profile, link, ctx.repetition,
                                           device_seed(ctx.seed, edge->logical_name())));
  }
  r.samples = cloud_samples(spec, ctx.host, work, ctx.repetition, ctx.seed);
  r.output = "served " + std::to_string(work.size()) + " device(s)";
  return r;
}

}  // namespace

AppRegistry AppRegistry::with_defaults() {
  AppRegistry reg;
  reg.add("savanna-client", savanna_client);
  reg.add("savanna-server", savanna_server);
  return reg;
}

void AppRegistry::add(std::string name, SimulatedApp app) { apps_.insert_or_assign(std::move(name), std::move(app)); }

const SimulatedApp* AppRegistry::find(const std::string& name) const {
  auto it = apps_.find(name);
  return it == apps_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace {

// Per-run scratch area standing in for the hosts' filesystems.
class Scratch {
 public:
  explicit Scratch(const std::string& run_id) {
    std::random_device rd;
    root_ = fs::temp_directory_path() / ("cb-" + run_id + "-" + std::to_string(rd()));
    fs::create_directories(root_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(root_, ec);
  }
  Scratch(const Scratch&) = delete;
  Scratch& operator=(const Scratch&) = delete;

  fs::path host_dir(const Host& host) const {
    auto dir = root_ / host.logical_name();
    fs::create_directories(dir);
    return dir;
  }

 private:
  fs::path root_;
};

bool unsafe_relative(const fs::path& p) {
  if (p.is_absolute()) return true;
  for (const auto& part : p) {
    if (part == "..") return true;
  }
  return false;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunContext {
  const ExperimentConfig& cfg;
  const DeploymentPlan& plan;
  const AppRegistry& apps;
  const ExecuteOptions& options;
  std::uint64_t seed;
  Scratch& scratch;
  ExperimentRun& run;
};

struct Effect {
  AppResult result;
};

ParamMap task_params(const RunContext& rc, const WorkflowTask& task, const Host& host) {
  ParamMap params;
  if (const auto* svc = rc.cfg.layers.find_service(host.layer, host.service)) params = svc->params;
  for (const auto& [k, v] : task.args) params[k] = v;
  return params;
}

AppResult do_copy_to(const RunContext& rc, const WorkflowTask& task, const Host& host) {
  AppResult r;
  auto src_it = task.args.find("src");
  if (src_it == task.args.end()) {
    r.ok = false;
    r.output = "copy_to needs a 'src' argument";
    return r;
  }
  const fs::path src = rc.options.experiment_dir / src_it->second;
  if (!fs::exists(src)) {
    r.ok = false;
    r.output = "source not found: " + src_it->second;
    return r;
  }
  auto dest_it = task.args.find("dest");
  const fs::path dest_rel = dest_it != task.args.end() ? fs::path(dest_it->second) : src.filename();
  if (unsafe_relative(dest_rel)) {
    r.ok = false;
    r.output = "destination escapes the host directory: " + dest_rel.string();
    return r;
  }
  const auto dest = rc.scratch.host_dir(host) / dest_rel;
  std::uintmax_t bytes = 0;
  if (fs::is_directory(src)) {
    fs::create_directories(dest);
    fs::copy(src, dest, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    for (const auto& e : fs::recursive_directory_iterator(src)) {
      if (e.is_regular_file()) bytes += e.file_size();
    }
  } else {
    fs::create_directories(dest.parent_path());
    fs::copy_file(src, dest, fs::copy_options::overwrite_existing);
    bytes = fs::file_size(src);
  }
  r.output = "copied " + std::to_string(bytes) + " bytes to " + dest_rel.generic_string();
  return r;
}

AppResult do_execute(const RunContext& rc, const WorkflowTask& task, const Host& host, int repetition,
                     Seconds now) {
  const auto params = task_params(rc, task, host);
  auto app_it = params.find("app");
  if (app_it != params.end()) {
    const auto* app = rc.apps.find(app_it->second);
    if (!app) {
      AppResult r;
      r.ok = false;
      r.output = "unknown application '" + app_it->second + "'";
      return r;
    }
    const AppContext ctx{rc.cfg, rc.plan, host, params, repetition, rc.seed, now, rc.cfg.workflow.interval};
    return (*app)(ctx);
  }
  // Generic command: simulated with a fixed duration and optional failure.
  AppResult r;
  auto get = [&](const char* k) -> const std::string* {
    auto it = task.args.find(k);
    return it == task.args.end() ? nullptr : &it->second;
  };
  if (const auto* d = get("duration")) r.duration = parse_duration(*d, DurationUnit::seconds);
  if (const auto* f = get("fail")) r.ok = !parse_bool(*f);
  if (const auto* f = get("fail_repetition")) {
    if (repetition >= 0 && std::to_string(repetition) == *f) r.ok = false;
  }
  const auto* cmd = get("command");
  r.output = std::string(r.ok ? "ran" : "failed") + ": " + (cmd ? *cmd : task.id);
  return r;
}

AppResult do_fetch(const RunContext& rc, const WorkflowTask& task, const Host& host) {
  AppResult r;
  auto src_it = task.args.find("src");
  const fs::path src_rel = src_it != task.args.end() ? fs::path(src_it->second) : fs::path("results");
  if (unsafe_relative(src_rel)) {
    r.ok = false;
    r.output = "source escapes the host directory: " + src_rel.string();
    return r;
  }
  const auto base = rc.scratch.host_dir(host);
  const auto src = base / src_rel;
  int files = 0;
  auto grab = [&](const fs::path& p) {
    const auto key = "hosts/" + host.logical_name() + "/" + fs::relative(p, base).generic_string();
    rc.run.fetched[key] = read_file(p);
    ++files;
  };
  if (fs::is_regular_file(src)) {
    grab(src);
  } else if (fs::is_directory(src)) {
    for (const auto& e : fs::recursive_directory_iterator(src)) {
      if (e.is_regular_file()) grab(e.path());
    }
  }
  r.output = "fetched " + std::to_string(files) + " file(s)";
  return r;
}

void record_samples(const RunContext& rc, const Host& host, const std::vector<MetricSample>& samples) {
  if (samples.empty()) return;
  const auto dir = rc.scratch.host_dir(host) / "results";
  fs::create_directories(dir);
  const auto path = dir / "metrics.csv";
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app | std::ios::binary);
  auto csv = samples_to_csv(samples);
  if (!fresh) csv.erase(0, csv.find('\n') + 1);
  out << csv;
}

struct Job {
  std::size_t task = 0;
  const Host* host = nullptr;
  bool started = false;
  bool done = false;
  TaskResult result;
  std::vector<MetricSample> samples;
};

struct TaskState {
  std::size_t remaining = 0;
  bool unsuccessful = false;
  std::vector<std::size_t> deps;
};

// Runs one phase (or one launch repetition) to completion on `loop`. Tasks
// form a DAG; each host runs one task at a time.
std::vector<TaskResult> run_phase(EventLoop& loop, const RunContext& rc, Phase phase, int repetition,
                                  std::vector<MetricSample>* samples_out, bool& failed) {
  const auto tasks = rc.cfg.workflow.phase_tasks(phase);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tasks.size(); ++i) index[tasks[i]->id] = i;

  std::vector<TaskState> states(tasks.size());
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (const auto& d : tasks[i]->depends_on) {
      auto it = index.find(d);
      if (it == index.end()) {
        throw Error(ErrorKind::execution, "execution.dependency",
                    "task '" + tasks[i]->id + "' depends on unknown task '" + d + "'");
      }
      states[i].deps.push_back(it->second);
    }
    const auto hosts = rc.plan.select(Selector::parse(tasks[i]->hosts));
    if (hosts.empty()) {
      Job j;
      j.task = i;
      jobs.push_back(std::move(j));
      states[i].remaining = 1;
      continue;
    }
    for (const auto* h : hosts) {
      Job j;
      j.task = i;
      j.host = h;
      jobs.push_back(std::move(j));
    }
    states[i].remaining = hosts.size();
  }

  std::set<std::string> busy;

  auto finish = [&](Job& job) {
    job.done = true;
    auto& st = states[job.task];
    --st.remaining;
    if (job.result.outcome != TaskOutcome::ok) st.unsuccessful = true;
  };

  std::function<void()> pass = [&] {
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& job : jobs) {
        if (job.started) continue;
        const auto& task = *tasks[job.task];
        bool ready = true;
        bool blocked = false;
        for (auto d : states[job.task].deps) {
          if (states[d].remaining > 0) ready = false;
          else if (states[d].unsuccessful) blocked = true;
        }
        if (!ready) continue;
        job.result.task_id = task.id;
        job.result.host = job.host ? job.host->logical_name() : "";
        job.result.started = loop.now();
        if (blocked || !job.host) {
          job.started = true;
          job.result.outcome = blocked ? TaskOutcome::skipped : TaskOutcome::failed;
          job.result.output = blocked ? "skipped: a dependency did not succeed"
                                      : "selector '" + task.hosts + "' matches no host";
          finish(job);
          changed = true;
          continue;
        }
        if (busy.count(job.host->id)) continue;
        job.started = true;
        busy.insert(job.host->id);
        AppResult effect;
        try {
          switch (task.action) {
            case TaskAction::copy_to: effect = do_copy_to(rc, task, *job.host); break;
            case TaskAction::execute: effect = do_execute(rc, task, *job.host, repetition, loop.now()); break;
            case TaskAction::fetch_results: effect = do_fetch(rc, task, *job.host); break;
          }
        } catch (const std::exception& e) {
          effect = AppResult{};
          effect.ok = false;
          effect.output = e.what();
        }
        job.result.outcome = effect.ok ? TaskOutcome::ok : TaskOutcome::failed;
        job.result.output = effect.output;
        job.result.duration = effect.duration;
        if (effect.ok) job.samples = std::move(effect.samples);
        Job* jp = &job;
        loop.schedule_after(effect.duration, [&, jp] {
          busy.erase(jp->host->id);
          record_samples(rc, *jp->host, jp->samples);
          if (samples_out) samples_out->insert(samples_out->end(), jp->samples.begin(), jp->samples.end());
          finish(*jp);
          pass();
        });
      }
    }
  };

  pass();
  loop.run();

  std::vector<TaskResult> results;
  for (auto& job : jobs) {
    if (!job.done) {
      job.result.task_id = tasks[job.task]->id;
      job.result.host = job.host ? job.host->logical_name() : "";
      job.result.outcome = TaskOutcome::skipped;
      job.result.output = "skipped: never became ready";
      job.result.started = loop.now();
    }
    if (job.result.outcome != TaskOutcome::ok) failed = true;
    results.push_back(job.result);
  }
  return results;
}

std::string derive_run_id(const std::string& digest, std::uint64_t seed, const std::string& label) {
  return "run-" + sha256_hex(digest + "|" + std::to_string(seed) + "|" + label).substr(0, 16);
}

}  // namespace

WorkflowEngine::WorkflowEngine(AppRegistry apps) : apps_(std::move(apps)) {}

ExperimentRun WorkflowEngine::execute(const ExperimentConfig& cfg, const DeploymentPlan& plan, std::uint64_t seed,
                                      const ExecuteOptions& options) const {
  if (cfg.workflow.repetitions < 1) {
    throw Error(ErrorKind::execution, "execution.repetitions", "repetitions must be >= 1");
  }
  ExperimentRun run;
  run.config_digest = config_digest(cfg);
  run.seed = seed;
  run.label = options.label;
  run.run_id = options.run_id.empty() ? derive_run_id(run.config_digest, seed, options.label) : options.run_id;
  run.planned_repetitions = cfg.workflow.repetitions;
  run.documents[std::string(kLayersFile)] = serialize(cfg.layers);
  run.documents[std::string(kNetworkFile)] = serialize(cfg.network);
  run.documents[std::string(kWorkflowFile)] = serialize(cfg.workflow);
  run.plan_json = plan_to_json(plan);
  run.started_at = utc_timestamp();
  run.status = RunStatus::running;

  Scratch scratch(run.run_id);
  const RunContext rc{cfg, plan, apps_, options, seed, scratch, run};
  EventLoop loop;
  bool any_failed = false;

  bool prepare_failed = false;
  run.prepare_results = run_phase(loop, rc, Phase::prepare, -1, nullptr, prepare_failed);
  any_failed |= prepare_failed;

  if (!prepare_failed) {
    const Seconds launch_start = loop.now();
    for (int k = 0; k < cfg.workflow.repetitions; ++k) {
      const Seconds scheduled = launch_start + cfg.workflow.interval * static_cast<double>(k);
      loop.advance_to(std::max(scheduled, loop.now()));
      RepetitionResult rep;
      rep.index = k;
      rep.started_at = loop.now();
      rep.task_results = run_phase(loop, rc, Phase::launch, k, &rep.samples, rep.failed);
      any_failed |= rep.failed;
      run.repetitions.push_back(std::move(rep));
      if (options.on_repetition) options.on_repetition(k + 1, cfg.workflow.repetitions);
    }
  }

  bool finalize_failed = false;
  run.finalize_results = run_phase(loop, rc, Phase::finalize, -1, nullptr, finalize_failed);
  any_failed |= finalize_failed;

  run.virtual_elapsed = loop.now();
  run.finished_at = utc_timestamp();
  run.status = any_failed ? RunStatus::failed : RunStatus::succeeded;
  return run;
}

// ---------------------------------------------------------------------------
// Results on disk
// ---------------------------------------------------------------------------

std::string samples_to_csv(const std::vector<MetricSample>& samples) {
  std::string out = "metric,host,repetition,value,unit\n";
  for (const auto& s : samples) {
    out += s.metric + "," + s.host + "," + std::to_string(s.repetition) + "," + format_double(s.value) + "," +
           s.unit + "\n";
  }
  return out;
}

std::vector<MetricSample> samples_from_csv(std::string_view csv) {
  std::vector<MetricSample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    auto end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    auto line = csv.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string_view> cols;
    std::size_t c = 0;
    while (true) {
      auto comma = line.find(',', c);
      cols.push_back(line.substr(c, comma == std::string_view::npos ? std::string_view::npos : comma - c));
      if (comma == std::string_view::npos) break;
      c = comma + 1;
    }
    if (cols.size() != 5) {
      throw Error(ErrorKind::usage, "results.csv", "samples.csv line " + std::to_string(line_no) + ": expected 5 columns");
    }
    MetricSample s;
    s.metric = cols[0];
    s.host = cols[1];
    auto r1 = std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), s.repetition);
    auto r2 = std::from_chars(cols[3].data(), cols[3].data() + cols[3].size(), s.value);
    if (r1.ec != std::errc{} || r2.ec != std::errc{}) {
      throw Error(ErrorKind::usage, "results.csv", "samples.csv line " + std::to_string(line_no) + ": bad number");
    }
    s.unit = cols[4];
    out.push_back(std::move(s));
  }
  return out;
}

std::string run_to_json(const ExperimentRun& run) {
  nlohmann::ordered_json j;
  j["run_id"] = run.run_id;
  j["label"] = run.label;
  j["status"] = to_string(run.status);
  j["seed"] = run.seed;
  j["config_digest"] = run.config_digest;
  j["started_at"] = run.started_at;
  j["finished_at"] = run.finished_at;
  j["virtual_elapsed_s"] = run.virtual_elapsed.count();
  j["planned_repetitions"] = run.planned_repetitions;
  j["completed_repetitions"] = run.repetitions.size();
  auto failed = nlohmann::ordered_json::array();
  for (const auto& rep : run.repetitions) {
    if (rep.failed) failed.push_back(rep.index);
  }
  j["failed_repetitions"] = failed;
  j["samples"] = run.all_samples().size();
  return j.dump(2) + "\n";
}

namespace {

void write_file(const fs::path& path, std::string_view data) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::usage, "results.write", "cannot write " + path.string());
}

void log_results(std::ostringstream& log, const char* phase, const std::string& rep,
                 const std::vector<TaskResult>& results) {
  for (const auto& t : results) {
    log << phase << '\t' << rep << '\t' << t.task_id << '\t' << t.host << '\t' << to_string(t.outcome)
        << "\tstart=" << format_duration(t.started) << "\tduration=" << format_duration(t.duration) << '\t'
        << t.output << '\n';
  }
}

}  // namespace

fs::path collect_results(const ExperimentRun& run, const fs::path& results_root) {
  if (run.status == RunStatus::pending || run.status == RunStatus::running) {
    throw Error(ErrorKind::execution, "execution.not_finished", "run " + run.run_id + " has not finished");
  }
  const auto dir = results_root / run.run_id;
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  for (const auto& [name, text] : run.documents) write_file(dir / "config" / name, text);
  write_file(dir / "plan.json", run.plan_json);
  write_file(dir / "samples.csv", samples_to_csv(run.all_samples()));
  std::ostringstream log;
  log_results(log, "prepare", "-", run.prepare_results);
  for (const auto& rep : run.repetitions) log_results(log, "launch", std::to_string(rep.index), rep.task_results);
  log_results(log, "finalize", "-", run.finalize_results);
  write_file(dir / "tasks.log", log.str());
  for (const auto& [rel, data] : run.fetched) {
    if (unsafe_relative(rel)) continue;
    write_file(dir / rel, data);
  }
  write_file(dir / "run.json", run_to_json(run));
  return dir;
}

RunArchive load_run(const fs::path& run_dir) {
  const auto meta_path = run_dir / "run.json";
  if (!fs::exists(meta_path)) throw Error(ErrorKind::usage, "results.missing", "no run.json in " + run_dir.string());
  RunArchive a;
  a.dir = run_dir;
  try {
    const auto j = nlohmann::json::parse(read_file(meta_path));
    a.run_id = j.at("run_id").get<std::string>();
    a.label = j.value("label", "");
    a.status = j.value("status", "");
    a.seed = j.value("seed", std::uint64_t{0});
    a.config_digest = j.value("config_digest", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::usage, "results.corrupt", meta_path.string() + ": " + e.what());
  }
  const auto csv = run_dir / "samples.csv";
  if (fs::exists(csv)) a.samples = samples_from_csv(read_file(csv));
  return a;
}

std::vector<RunArchive> load_runs(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorKind::usage, "results.missing", "not a directory: " + root.string());
  std::vector<RunArchive> out;
  if (fs::exists(root / "run.json")) {
    out.push_back(load_run(root));
    return out;
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    if (fs::exists(e.path() / "run.json")) {
      dirs.push_back(e.path());
    } else {
      for (const auto& inner : fs::directory_iterator(e.path())) {
        if (inner.is_directory() && fs::exists(inner.path() / "run.json")) dirs.push_back(inner.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) out.push_back(load_run(d));
  std::stable_sort(out.begin(), out.end(), [](const RunArchive& a, const RunArchive& b) { return a.label < b.label; });
  return out;
}

}  // namespace cb
