#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cb/error.hpp"
#include "cb/units.hpp"

namespace cb {

class ProfileCatalog;

using ParamMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// layers_services.yaml
// ---------------------------------------------------------------------------

struct ServiceSpec {
  std::string name;
  int quantity = 1;
  std::string environment;
  std::string profile;
  ParamMap params;  // service settings plus any unrecognised keys

  bool operator==(const ServiceSpec&) const = default;
};

struct LayerSpec {
  std::string name;
  std::vector<ServiceSpec> services;

  bool operator==(const LayerSpec&) const = default;
};

// Where an environment's resources come from. `provider` names a registered
// provider kind (simulated, mock, g5k, iotlab, chameleon, chi-edge).
struct EnvironmentSpec {
  std::string provider;
  std::string site;
  std::string credentials;  // path to a testbed credential file, may be empty
  ParamMap extra;

  bool operator==(const EnvironmentSpec&) const = default;
};

struct LayersServicesConfig {
  std::vector<LayerSpec> layers;
  std::map<std::string, EnvironmentSpec> environments;
  ParamMap global;

  const LayerSpec* find_layer(std::string_view name) const;
  const ServiceSpec* find_service(std::string_view layer, std::string_view service) const;

  bool operator==(const LayersServicesConfig&) const = default;
};

// ---------------------------------------------------------------------------
// network.yaml
// ---------------------------------------------------------------------------

struct NetworkRule {
  std::string src;
  std::string dst;
  Seconds delay{0};  // round trip
  double rate = 0;   // bits per second
  double loss = 0;
  bool symmetric = false;

  bool operator==(const NetworkRule&) const = default;
};

struct NetworkConfig {
  std::vector<NetworkRule> rules;

  bool operator==(const NetworkConfig&) const = default;
};

// Replaces every symmetric rule by its two directed halves. Idempotent.
NetworkConfig expand_symmetric(const NetworkConfig& net);

// ---------------------------------------------------------------------------
// workflow.yaml
// ---------------------------------------------------------------------------

enum class Phase { prepare, launch, finalize };
enum class TaskAction { copy_to, execute, fetch_results };

const char* to_string(Phase phase) noexcept;
const char* to_string(TaskAction action) noexcept;

struct WorkflowTask {
  std::string id;
  Phase phase = Phase::prepare;
  std::string hosts;  // selector, see Selector
  TaskAction action = TaskAction::execute;
  ParamMap args;
  std::vector<std::string> depends_on;

  bool operator==(const WorkflowTask&) const = default;
};

struct WorkflowConfig {
  std::vector<WorkflowTask> tasks;  // grouped by phase, declaration order within
  int repetitions = 1;
  Seconds interval{0};

  std::vector<const WorkflowTask*> phase_tasks(Phase phase) const;

  bool operator==(const WorkflowConfig&) const = default;
};

struct ExperimentConfig {
  LayersServicesConfig layers;
  NetworkConfig network;
  WorkflowConfig workflow;

  bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Host selectors: layer[.service[.index]] with '*' in any position.
// ---------------------------------------------------------------------------

struct Selector {
  std::string layer = "*";
  std::string service = "*";
  std::optional<int> index;  // nullopt matches every instance

  static Selector parse(std::string_view text);
  bool matches(std::string_view layer_name, std::string_view service_name, int instance) const;
  bool matches_service(std::string_view layer_name, std::string_view service_name) const;
};

// ---------------------------------------------------------------------------
// Parsing, serialisation, validation
// ---------------------------------------------------------------------------

inline constexpr std::string_view kLayersFile = "layers_services.yaml";
inline constexpr std::string_view kNetworkFile = "network.yaml";
inline constexpr std::string_view kWorkflowFile = "workflow.yaml";

// Parse failure with the document location it refers to.
class ConfigError : public Error {
 public:
  ConfigError(std::string code, std::string location, const std::string& message)
      : Error(ErrorKind::validation, std::move(code), location + ": " + message),
        location_(std::move(location)),
        detail_(message) {}

  const std::string& location() const noexcept { return location_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string location_;
  std::string detail_;
};

// All parse functions throw ConfigError. Syntax errors carry
// the 1-based line number in the message.
LayersServicesConfig parse_layers_services(std::string_view text);
NetworkConfig parse_network(std::string_view text);
WorkflowConfig parse_workflow(std::string_view text);

std::string serialize(const LayersServicesConfig& cfg);
std::string serialize(const NetworkConfig& cfg);
std::string serialize(const WorkflowConfig& cfg);

// SHA-256 hex over the three canonical documents.
std::string config_digest(const ExperimentConfig& cfg);

enum class Severity { error, warning };

struct ValidationIssue {
  Severity severity = Severity::error;
  std::string location;
  std::string message;

  auto operator<=>(const ValidationIssue&) const = default;
};

struct ValidateOptions {
  // Directory credential paths are resolved against; presence is only warned about.
  std::optional<std::filesystem::path> base_dir;
};

// Cross-document checks. Result is sorted, so declaration order of rules and
// tasks does not affect it.
std::vector<ValidationIssue> validate(const ExperimentConfig& cfg, const ProfileCatalog& catalog,
                                      const ValidateOptions& options = {});

bool has_errors(const std::vector<ValidationIssue>& issues);
std::string render_text(const std::vector<ValidationIssue>& issues);
std::string render_json(const std::vector<ValidationIssue>& issues);

// Reads and parses the three documents from `dir`. Parse failures are
// returned as issues (one per failing document) instead of thrown.
struct LoadedExperiment {
  std::optional<ExperimentConfig> config;
  std::vector<ValidationIssue> issues;
};
LoadedExperiment load_experiment(const std::filesystem::path& dir);

// load_experiment + validate.
LoadedExperiment check_experiment(const std::filesystem::path& dir, const ProfileCatalog& catalog);

// Command-line style overrides, applied after parsing:
//   rate=25Kbit | delay=150ms | loss=0.01    (every network rule)
//   repetitions=N | interval=30s             (workflow)
//   param.KEY=VALUE                          (every service)
//   profile.LAYER.SERVICE=NAME
//   environment.NAME.provider=KIND
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

}  // namespace cb
