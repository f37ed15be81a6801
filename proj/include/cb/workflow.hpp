#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cb/config.hpp"
#include "cb/provider.hpp"
#include "cb/units.hpp"

namespace cb {

enum class RunStatus { pending, running, succeeded, failed };
enum class TaskOutcome { ok, failed, skipped };

const char* to_string(RunStatus status) noexcept;
const char* to_string(TaskOutcome outcome) noexcept;

struct MetricSample {
  std::string metric;  // processing_time_s, bytes_to_cloud, cpu_pct, mem_gb, ...
  std::string host;    // logical instance name, e.g. edge.client.0
  int repetition = 0;
  double value = 0;
  std::string unit;

  bool operator==(const MetricSample&) const = default;
};

struct TaskResult {
  std::string task_id;
  std::string host;  // logical instance name
  TaskOutcome outcome = TaskOutcome::ok;
  std::string output;
  Seconds started{0};  // virtual time
  Seconds duration{0};
};

struct RepetitionResult {
  int index = 0;
  Seconds started_at{0};
  bool failed = false;
  std::vector<MetricSample> samples;
  std::vector<TaskResult> task_results;
};

struct ExperimentRun {
  std::string run_id;
  std::string label;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string started_at;   // wall clock, ISO 8601 UTC
  std::string finished_at;
  Seconds virtual_elapsed{0};
  RunStatus status = RunStatus::pending;
  int planned_repetitions = 0;

  std::vector<TaskResult> prepare_results;
  std::vector<RepetitionResult> repetitions;
  std::vector<TaskResult> finalize_results;

  // Canonical documents the run was executed with, keyed by file name.
  std::map<std::string, std::string> documents;
  std::string plan_json;
  // Files gathered by fetch_results, keyed by archive-relative path.
  std::map<std::string, std::string> fetched;

  std::vector<MetricSample> all_samples() const;
};

// What a simulated application sees when one of its tasks runs.
struct AppContext {
  const ExperimentConfig& config;
  const DeploymentPlan& plan;
  const Host& host;
  const ParamMap& params;  // service params overlaid with task args
  int repetition;          // -1 outside the launch phase
  std::uint64_t seed;
  Seconds now;
  Seconds interval;
};

struct AppResult {
  bool ok = true;
  Seconds duration{0};
  std::string output;
  std::vector<MetricSample> samples;
};

using SimulatedApp = std::function<AppResult(const AppContext&)>;

// Applications runnable by `execute` tasks under the simulated provider,
// selected by the "app" task arg or service param.
class AppRegistry {
 public:
  // savanna-client and savanna-server.
  static AppRegistry with_defaults();

  void add(std::string name, SimulatedApp app);
  const SimulatedApp* find(const std::string& name) const;

 private:
  std::map<std::string, SimulatedApp> apps_;
};

struct ExecuteOptions {
  std::filesystem::path experiment_dir;  // copy_to sources are resolved here
  std::string label;
  std::string run_id;  // derived from digest, seed and label when empty
  // Called after each launch repetition with (completed, total).
  std::function<void(int, int)> on_repetition;
};

class WorkflowEngine {
 public:
  explicit WorkflowEngine(AppRegistry apps = AppRegistry::with_defaults());

  // prepare once, launch `repetitions` times with `interval` between starts,
  // finalize once. All timing is virtual.
  ExperimentRun execute(const ExperimentConfig& cfg, const DeploymentPlan& plan, std::uint64_t seed,
                        const ExecuteOptions& options = {}) const;

 private:
  AppRegistry apps_;
};

// Writes results/<run_id>/ under `results_root` and returns that directory:
// config/, samples.csv, tasks.log, run.json, hosts/.
std::filesystem::path collect_results(const ExperimentRun& run, const std::filesystem::path& results_root);

std::string samples_to_csv(const std::vector<MetricSample>& samples);
std::vector<MetricSample> samples_from_csv(std::string_view csv);
std::string run_to_json(const ExperimentRun& run);

// A collected run read back from disk.
struct RunArchive {
  std::filesystem::path dir;
  std::string run_id;
  std::string label;
  std::string status;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<MetricSample> samples;
};

RunArchive load_run(const std::filesystem::path& run_dir);

// Every run below `root` (run.json at any depth up to two levels), sorted by label.
std::vector<RunArchive> load_runs(const std::filesystem::path& root);

}  // namespace cb
